#pragma once

#include "cdseg/core/error.hpp"
#include "cdseg/core/matrix.hpp"
#include "cdseg/diffusion/perturbation.hpp"
#include "cdseg/diffusion/process.hpp"
#include "cdseg/diffusion/schedule.hpp"
#include "cdseg/geometry/cloud_io.hpp"
#include "cdseg/geometry/dataset.hpp"
#include "cdseg/geometry/point_cloud.hpp"
#include "cdseg/geometry/pooling.hpp"
#include "cdseg/geometry/serialize.hpp"
#include "cdseg/geometry/synth.hpp"
#include "cdseg/geometry/transforms.hpp"
#include "cdseg/geometry/voxelize.hpp"
#include "cdseg/autograd/graph.hpp"
#include "cdseg/autograd/ops.hpp"
#include "cdseg/nets/config.hpp"
#include "cdseg/nets/hierarchy.hpp"
#include "cdseg/nets/layers.hpp"
#include "cdseg/nets/model.hpp"
#include "cdseg/nets/time_embed.hpp"
#include "cdseg/training/balance.hpp"
#include "cdseg/training/batch.hpp"
#include "cdseg/training/checkpoint.hpp"
#include "cdseg/training/config.hpp"
#include "cdseg/training/losses.hpp"
#include "cdseg/training/optimizer.hpp"
#include "cdseg/training/trainer.hpp"
#include "cdseg/inference/inference.hpp"
#include "cdseg/evaluation/harness.hpp"
#include "cdseg/evaluation/metrics.hpp"
#include "cdseg/evaluation/plots.hpp"
#include "cdseg/evaluation/report.hpp"
#include "cdseg/config/experiment.hpp"
#include "cdseg/config/schema.hpp"
#include "cdseg/cli/commands.hpp"
