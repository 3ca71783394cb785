#include <gtest/gtest.h>

#include <numeric>
#include <set>

#include "cdseg/config/experiment.hpp"
#include "cdseg/nets/model.hpp"
#include "cdseg/nets/time_embed.hpp"
#include "cdseg/training/batch.hpp"
#include "fixtures.hpp"

using namespace cdseg;
using namespace cdseg::nets;
using autograd::Graph;
using autograd::Var;

namespace {

template <class T>
Matrix<T> noise_like(std::size_t r, std::size_t c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  Matrix<T> m(r, c);
  for (auto& v : m.flat()) v = static_cast<T>(nd(rng));
  return m;
}

struct Outputs {
  Matrix<double> prediction, logits;
};

Outputs run(CnfModel<double>& m, const training::Batch<double>& b, const Matrix<double>& signal, int t,
            PassCounters* counters = nullptr, autograd::AttentionProbe* probe = nullptr) {
  Graph<double> g(false);
  DropPath off;
  std::vector<int> ts(b.batch_size(), t);
  auto nn = m.nn_forward(g, g.constant(signal), b.inputs, ts, off, true, counters, probe);
  Outputs o;
  o.prediction = g.value(nn.prediction);
  if (m.config().uses_fusion()) o.logits = g.value(m.cn_forward(g, b.inputs, nn.bottleneck, off, counters, probe));
  return o;
}

}  // namespace

TEST(TimeEmbed, NormAndUniqueness) {
  std::vector<int> t(1000);
  std::iota(t.begin(), t.end(), 1);
  auto e = time_embed<double>(t, 32);
  std::set<std::vector<double>> rows;
  for (std::size_t i = 0; i < t.size(); ++i) {
    double n2 = 0;
    for (double v : e.row(i)) n2 += v * v;
    EXPECT_NEAR(std::sqrt(n2), std::sqrt(16.0), 1e-12);
    rows.insert(std::vector<double>(e.row(i).begin(), e.row(i).end()));
  }
  EXPECT_EQ(rows.size(), 1000u);
  EXPECT_DOUBLE_EQ(e(0, 0), std::sin(1.0));
  EXPECT_DOUBLE_EQ(e(0, 16), std::cos(1.0));
  EXPECT_THROW(time_embed<double>(t, 7), ConfigError);
}

TEST(Model, OutputShapesAndCounters) {
  auto net = fixture::micro_net();
  CnfModel<double> m(net, 1);
  auto s = fixture::scene(1);
  auto b = training::make_batch<double>({&s}, net);
  PassCounters c;
  auto o = run(m, b, noise_like<double>(b.size(), 6, 2), 500, &c);
  EXPECT_EQ(o.prediction.rows(), b.size());
  EXPECT_EQ(o.prediction.cols(), 6u);
  EXPECT_EQ(o.logits.rows(), b.size());
  EXPECT_EQ(o.logits.cols(), 4u);
  EXPECT_EQ(c.nn_encoder, 1u);
  EXPECT_EQ(c.nn_decoder, 1u);
  EXPECT_EQ(c.cn, 1u);
  EXPECT_EQ(c.ffm, 1u);
}

TEST(Model, AttentionRowsSumToOne) {
  auto net = fixture::micro_net();
  CnfModel<double> m(net, 3);
  auto s = fixture::scene(3);
  auto b = training::make_batch<double>({&s}, net);
  autograd::AttentionProbe probe;
  run(m, b, noise_like<double>(b.size(), 6, 4), 10, nullptr, &probe);
  EXPECT_GT(probe.calls, 5u);
  EXPECT_LE(probe.max_rowsum_error, 1e-12);
}

TEST(Model, SeedDeterminism) {
  auto net = fixture::micro_net();
  CnfModel<double> a(net, 7), b(net, 7), c(net, 8);
  ASSERT_EQ(a.parameters().size(), b.parameters().size());
  bool differs = false;
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    EXPECT_EQ(a.parameters()[i].value, b.parameters()[i].value);
    EXPECT_EQ(a.parameters()[i].name, c.parameters()[i].name);
    differs |= a.parameters()[i].value != c.parameters()[i].value;
  }
  EXPECT_TRUE(differs);
  auto s = fixture::scene(4);
  auto batch = training::make_batch<double>({&s}, net);
  auto x = noise_like<double>(batch.size(), 6, 5);
  EXPECT_EQ(run(a, batch, x, 300).logits, run(b, batch, x, 300).logits);
}

TEST(Model, TimestepReachesNoiseBranchOnly) {
  auto net = fixture::micro_net();
  CnfModel<double> m(net, 9);
  auto s = fixture::scene(5);
  auto b = training::make_batch<double>({&s}, net);
  auto x = noise_like<double>(b.size(), 6, 6);
  auto o1 = run(m, b, x, 1), o2 = run(m, b, x, 900);
  EXPECT_NE(o1.prediction, o2.prediction);
  Graph<double> g(false);
  auto l = g.value(m.cn_forward(g, b.inputs, std::nullopt, DropPath{}));
  Graph<double> g2(false);
  auto l2 = g2.value(m.cn_forward(g2, b.inputs, std::nullopt, DropPath{}));
  EXPECT_EQ(l, l2);
  EXPECT_NE(l, o1.logits);
}

TEST(Model, ZeroValueProjectionMakesFusionIgnoreNoiseBranch) {
  auto net = fixture::micro_net();
  CnfModel<double> m(net, 10);
  auto [w, bias] = m.fusion().value_projection(0);
  m.parameters()[w].value.fill(0);
  m.parameters()[bias].value.fill(0);
  auto s = fixture::scene(6);
  auto b = training::make_batch<double>({&s}, net);
  auto o1 = run(m, b, noise_like<double>(b.size(), 6, 7), 100);
  auto o2 = run(m, b, noise_like<double>(b.size(), 6, 8), 800);
  EXPECT_NE(o1.prediction, o2.prediction);
  for (std::size_t i = 0; i < o1.logits.size(); ++i) EXPECT_NEAR(o1.logits[i], o2.logits[i], 1e-12);
}

TEST(Model, FusionWidthMismatchIsConfigError) {
  auto net = fixture::micro_net();
  CnfModel<double> m(net, 11);
  auto s = fixture::scene(7);
  auto b = training::make_batch<double>({&s}, net);
  Graph<double> g(false);
  const auto& h = *b.inputs.cn_hierarchy;
  FeatureMap<double> cn{g.constant(Matrix<double>(h.levels.back().size(), 16)), &h, h.depth() - 1};
  FeatureMap<double> bad{g.constant(Matrix<double>(h.levels.back().size(), 5)), &h, h.depth() - 1};
  EXPECT_THROW(m.fusion()(g, m.parameters(), cn, bad, nullptr), ConfigError);
}

TEST(Model, StrideMismatchIsConsistencyError) {
  auto net = fixture::micro_net();
  CnfModel<double> m(net, 12);
  auto s = fixture::scene(8);
  auto b = training::make_batch<double>({&s}, net);
  auto in = b.inputs;
  in.nn_hierarchy = in.cn_hierarchy;
  Graph<double> g(false);
  EXPECT_THROW(m.nn_forward(g, g.constant(Matrix<double>(b.size(), 6)), in, {5}, DropPath{}), ConsistencyError);
}

TEST(Model, PermutationEquivariantWithSinglePatch) {
  auto net = fixture::micro_net();
  net.patch_size = 1 << 20;
  CnfModel<double> m(net, 13);
  auto s = fixture::scene(9, 200);
  const std::size_t n = s.voxels.size();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(1));
  auto p = s;
  for (std::size_t i = 0; i < n; ++i) {
    for (int d = 0; d < 3; ++d) p.voxels.positions(i, d) = s.voxels.positions(perm[i], d);
    for (std::size_t c = 0; c < 6; ++c) p.voxels.features(i, c) = s.voxels.features(perm[i], c);
    p.voxels.labels[i] = s.voxels.labels[perm[i]];
  }
  auto b = training::make_batch<double>({&s}, net);
  auto bp = training::make_batch<double>({&p}, net);
  auto x = noise_like<double>(n, 6, 9);
  Matrix<double> xp(n, 6);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < 6; ++c) xp(i, c) = x(perm[i], c);
  auto o = run(m, b, x, 200), op = run(m, bp, xp, 200);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(op.logits(i, c), o.logits(perm[i], c), 1e-9);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < 6; ++c) EXPECT_NEAR(op.prediction(i, c), o.prediction(perm[i], c), 1e-9);
}

TEST(Model, BatchElementsAreIndependent) {
  auto net = fixture::micro_net();
  CnfModel<double> m(net, 14);
  auto s1 = fixture::scene(10), s2 = fixture::scene(11);
  auto solo = training::make_batch<double>({&s1}, net);
  auto pair = training::make_batch<double>({&s1, &s2}, net);
  auto x = noise_like<double>(pair.size(), 6, 10);
  Matrix<double> x1(solo.size(), 6);
  std::copy(x.data(), x.data() + x1.size(), x1.data());
  Graph<double> g(false);
  auto a = g.value(m.nn_forward(g, g.constant(x1), solo.inputs, {300}, DropPath{}).prediction);
  auto bb = g.value(m.nn_forward(g, g.constant(x), pair.inputs, {300, 40}, DropPath{}).prediction);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], bb[i], 1e-12);
}

TEST(Model, NoiseNetworkSmallerThanConditionalNetwork) {
  auto net = config::tiny_preset().network;
  CnfModel<float> m(net, 0);
  std::size_t nn = 0, cn = 0;
  for (const auto& p : m.parameters().all()) {
    if (p.name.rfind("nn.", 0) == 0) nn += p.value.size();
    if (p.name.rfind("cn.", 0) == 0) cn += p.value.size();
  }
  EXPECT_GT(nn, 0u);
  EXPECT_LT(nn, cn);
  EXPECT_EQ(m.parameter_count(), m.parameters().scalar_count());
}

TEST(Model, FrameworkStructure) {
  CnfModel<double> ncf(fixture::micro_net(Framework::ncf), 0);
  for (const auto& p : ncf.parameters().all()) {
    EXPECT_NE(p.name.rfind("cn.", 0), 0u) << p.name;
    EXPECT_NE(p.name.rfind("ffm.", 0), 0u) << p.name;
  }
  auto s = fixture::scene(12);
  auto b = training::make_batch<double>({&s}, ncf.config());
  Graph<double> g(false);
  EXPECT_THROW(ncf.cn_forward(g, b.inputs, std::nullopt, DropPath{}), ConsistencyError);
  auto pred = g.value(ncf.nn_forward(g, g.constant(Matrix<double>(b.size(), 4)), b.inputs, {7}, DropPath{}).prediction);
  EXPECT_EQ(pred.cols(), 4u);

  CnfModel<double> plain(fixture::micro_net(Framework::plain), 0);
  for (const auto& p : plain.parameters().all()) EXPECT_EQ(p.name.find("time_proj"), std::string::npos);
  CnfModel<double> cnf(fixture::micro_net(Framework::cnf), 0);
  EXPECT_GT(cnf.parameter_count(), plain.parameter_count());
}

TEST(Model, ZeroDepthStages) {
  auto net = fixture::micro_net();
  net.nn.enc_depths = {0};
  net.nn.dec_depths = {0};
  net.cn.enc_depths = {0, 1};
  net.cn.dec_depths = {0, 0};
  net.ffm_depth = 0;
  CnfModel<double> m(net, 15);
  auto s = fixture::scene(13);
  auto b = training::make_batch<double>({&s}, net);
  auto o = run(m, b, noise_like<double>(b.size(), 6, 11), 30);
  EXPECT_EQ(o.logits.rows(), b.size());
  for (double v : o.logits.flat()) EXPECT_TRUE(std::isfinite(v));
}

TEST(Model, ConfigValidation) {
  auto net = fixture::micro_net();
  net.cn.enc_heads = {3, 2};
  EXPECT_THROW(CnfModel<double>(net, 0), ConfigError);
  net = fixture::micro_net();
  net.nn.strides = {2, 2};
  EXPECT_THROW(CnfModel<double>(net, 0), ConfigError);
  net = fixture::micro_net(Framework::ncf);
  net.nn_input = NnInput::features;
  EXPECT_THROW(validate(net), ConfigError);
  net = fixture::micro_net(Framework::plain);
  net.fit_target = FitTarget::x0;
  try {
    validate(net);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("network.fit_target"), std::string::npos);
  }
}

TEST(Model, DropPathOnlyWhenActive) {
  auto net = fixture::micro_net();
  net.drop_path = 0.5;
  CnfModel<double> m(net, 16);
  auto s = fixture::scene(14);
  auto b = training::make_batch<double>({&s}, net);
  auto x = noise_like<double>(b.size(), 6, 12);
  Graph<double> g(false);
  std::mt19937_64 rng(1);
  DropPath on{0.5, &rng};
  std::set<std::vector<double>> outs;
  for (int i = 0; i < 6; ++i) {
    auto v = g.value(m.nn_forward(g, g.constant(x), b.inputs, {10}, on).prediction);
    outs.insert(v.storage());
  }
  EXPECT_GT(outs.size(), 1u);
  auto a = g.value(m.nn_forward(g, g.constant(x), b.inputs, {10}, DropPath{0.5, nullptr}).prediction);
  auto c = g.value(m.nn_forward(g, g.constant(x), b.inputs, {10}, DropPath{}).prediction);
  EXPECT_EQ(a, c);
}
