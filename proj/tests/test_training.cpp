#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "cdseg/training/balance.hpp"
#include "cdseg/training/batch.hpp"
#include "cdseg/training/checkpoint.hpp"
#include "cdseg/training/losses.hpp"
#include "cdseg/training/optimizer.hpp"
#include "cdseg/training/trainer.hpp"
#include "fixtures.hpp"
#include "support.hpp"

using namespace cdseg;
using namespace cdseg::training;
using autograd::Graph;
using autograd::Var;

namespace fs = std::filesystem;

namespace {

Matrix<double> random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> nd(0, sd);
  Matrix<double> m(r, c);
  for (auto& v : m.flat()) v = nd(rng);
  return m;
}

fs::path temp_dir(const std::string& name) {
  auto d = fs::temp_directory_path() / ("cdseg_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

TrainConfig quick_train(int steps) {
  TrainConfig t;
  t.lr = 3e-3;
  t.block_lr = 3e-3;
  t.weight_decay = 1e-4;
  t.batch_size = 2;
  t.epochs = 100;
  t.max_steps = steps;
  t.voxel_size = 0.1;
  t.seed = 3;
  return t;
}

LoopOptions in_dir(const fs::path& d) {
  LoopOptions o;
  o.out_dir = d;
  return o;
}

}  // namespace

TEST(Losses, NoiseLoss) {
  Matrix<double> ones(2, 2, 1.0), zero(2, 2);
  EXPECT_DOUBLE_EQ(mse(zero, ones), 1.0);
  EXPECT_DOUBLE_EQ(mse(ones, ones), 0.0);
  std::mt19937_64 rng(1);
  auto a = random_matrix(5, 3, rng), b = random_matrix(5, 3, rng);
  double want = 0;
  for (std::size_t i = 0; i < a.size(); ++i) want += (a[i] - b[i]) * (a[i] - b[i]);
  EXPECT_NEAR(mse(a, b), want / 15, 1e-14);
  Graph<double> g(false);
  EXPECT_EQ(g.value(noise_loss(g, g.constant(a), b))[0], g.value(baseline_nn_loss(g, g.constant(a), b))[0]);
}

TEST(Losses, CrossEntropyHandCases) {
  Matrix<double> l(2, 2, std::vector<double>{1, 0, 0, 1});
  EXPECT_NEAR(ce_loss(l, {0, 1}), -std::log(std::exp(1.0) / (std::exp(1.0) + 1)), 1e-14);
  EXPECT_NEAR(ce_loss(l, {0, 1}), 0.3133, 1e-4);
  Matrix<double> u(3, 4, 0.25);
  EXPECT_NEAR(ce_loss(u, {0, 3, 2}), std::log(4.0), 1e-14);
  // unlabeled rows are excluded
  Matrix<double> l3(3, 2, std::vector<double>{1, 0, 0, 1, 50, -50});
  EXPECT_NEAR(ce_loss(l3, {0, 1, -1}), ce_loss(l, {0, 1}), 1e-14);
  Matrix<double> sure(1, 3, std::vector<double>{60, 0, 0});
  EXPECT_LT(ce_loss(sure, {0}), 1e-20);
  EXPECT_THROW(ce_loss(l, {0, 2}), Error);
}

TEST(Losses, LovaszHandCases) {
  Matrix<double> perfect(3, 2, std::vector<double>{80, -80, -80, 80, 80, -80});
  EXPECT_NEAR(lovasz_softmax_loss(perfect, {0, 1, 0}), 0.0, 1e-12);
  Matrix<double> wrong(1, 2, std::vector<double>{-80, 80});
  EXPECT_NEAR(lovasz_softmax_loss(wrong, {0}), 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(lovasz_softmax_loss(wrong, {-1}), 0.0);
  auto w = lovasz_grad<double>({1, 0, 1});
  // prefix Jaccard losses 1/2, 2/3, 1
  EXPECT_NEAR(w[0], 0.5, 1e-15);
  EXPECT_NEAR(w[0] + w[1], 1.0 - 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(w[0] + w[1] + w[2], 1.0, 1e-15);
}

TEST(Losses, LovaszMatchesBruteForce) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 8;
    const std::size_t k = 2 + trial % 3;
    auto L = random_matrix(n, k, rng, 2.0);
    std::vector<int> gt(n);
    for (auto& v : gt) v = static_cast<int>(rng() % (k + 1)) - 1;
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < n; ++i) rows.emplace_back(L.row(i).begin(), L.row(i).end());
    EXPECT_NEAR(lovasz_softmax_loss(L, gt), oracle::brute_lovasz_softmax(rows, gt), 1e-10);
    const double v = lovasz_softmax_loss(L, gt);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Losses, SegmentationGradients) {
  std::mt19937_64 rng(3);
  autograd::Parameter<double> p;
  p.name = "logits";
  p.value = random_matrix(7, 3, rng);
  std::vector<int> gt{0, 1, 2, 2, -1, 1, 0};
  auto r = oracle::check_gradients([&](Graph<double>& g) { return segmentation_loss(g, g.param(p), gt, 0.7); }, {&p});
  EXPECT_EQ(r.failed, 0u) << r.worst_name << " " << r.worst_rel;
  for (int c = 0; c < 3; ++c) EXPECT_EQ(p.grad(4, c), 0.0);
}

TEST(Balance, HandValues) {
  BalanceState<double> st;
  std::mt19937_64 rng(4);
  auto [gls, gw] = combine_losses(LossStrategy::gls, {4, 9}, st, rng);
  EXPECT_NEAR(gls, 6.0, 1e-14);
  EXPECT_NEAR(gw[0], 0.75, 1e-14);
  EXPECT_NEAR(gw[1], 6.0 / 18.0, 1e-14);
  auto [ew, ww] = combine_losses(LossStrategy::ew, {4, 9}, st, rng);
  EXPECT_DOUBLE_EQ(ew, 13.0);
  EXPECT_EQ(ww, (std::vector<double>{1, 1}));
  auto [uw, uwv] = combine_losses(LossStrategy::uw, {4, 9}, st, rng);
  EXPECT_DOUBLE_EQ(uw, 13.0);
  BalanceState<double> st3(3);
  auto [g3, w3] = combine_losses(LossStrategy::gls, {2, 4, 8}, st3, rng);
  EXPECT_NEAR(g3, 4.0, 1e-12);
  EXPECT_NEAR(w3[0], 4.0 / 6.0, 1e-12);
}

TEST(Balance, GlsGradientIdentity) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.05, 20.0);
  for (int i = 0; i < 10; ++i) {
    autograd::Parameter<double> a, b;
    a.name = "L_nn";
    b.name = "L_cn";
    a.value = Matrix<double>(1, 1, u(rng));
    b.value = Matrix<double>(1, 1, u(rng));
    BalanceState<double> st;
    std::mt19937_64 r(0);
    auto f = [&](Graph<double>& g) { return combine_losses(g, LossStrategy::gls, {g.param(a), g.param(b)}, st, r).total; };
    auto res = oracle::check_gradients(f, {&a, &b}, 1e-6, 1e-6, 1e-9);
    EXPECT_EQ(res.failed, 0u);
    const double total = std::sqrt(a.value[0] * b.value[0]);
    EXPECT_NEAR(a.grad[0], total / (2 * a.value[0]), 1e-6);
    EXPECT_NEAR(b.grad[0], total / (2 * b.value[0]), 1e-6);
  }
  autograd::Parameter<double> a, b;
  a.value = Matrix<double>(1, 1, 4.0);
  b.value = Matrix<double>(1, 1, 9.0);
  BalanceState<double> st;
  std::mt19937_64 r(0);
  auto f = [&](Graph<double>& g) { return combine_losses(g, LossStrategy::gls, {g.param(a), g.param(b)}, st, r).total; };
  oracle::check_gradients(f, {&a, &b});
  EXPECT_NEAR(a.grad[0], 0.75, 1e-6);
}

TEST(Balance, GlsClampsNonpositive) {
  BalanceState<double> st;
  std::mt19937_64 rng(6);
  auto [total, w] = combine_losses(LossStrategy::gls, {0.0, 4.0}, st, rng);
  EXPECT_TRUE(std::isfinite(total));
  EXPECT_NEAR(total, std::sqrt(kGlsFloor * 4.0), 1e-15);
  for (double v : w) EXPECT_GE(v, 0.0);
}

TEST(Balance, RandomWeightsAreASimplexDraw) {
  BalanceState<double> st;
  std::mt19937_64 rng(7);
  std::set<double> firsts;
  for (int i = 0; i < 50; ++i) {
    auto [total, w] = combine_losses(LossStrategy::rlw, {2.0, 5.0}, st, rng);
    EXPECT_NEAR(w[0] + w[1], 1.0, 1e-12);
    EXPECT_GE(w[0], 0.0);
    EXPECT_GE(w[1], 0.0);
    EXPECT_NEAR(total, 2.0 * w[0] + 5.0 * w[1], 1e-12);
    firsts.insert(w[0]);
  }
  EXPECT_EQ(firsts.size(), 50u);
}

TEST(Balance, UncertaintyWeighting) {
  BalanceState<double> st;
  st.log_var[0].value[0] = 0.5;
  st.log_var[1].value[0] = -0.25;
  autograd::Parameter<double> a, b;
  a.value = Matrix<double>(1, 1, 3.0);
  b.value = Matrix<double>(1, 1, 0.5);
  std::mt19937_64 r(0);
  auto f = [&](Graph<double>& g) { return combine_losses(g, LossStrategy::uw, {g.param(a), g.param(b)}, st, r).total; };
  Graph<double> g(false);
  EXPECT_NEAR(g.value(f(g))[0], std::exp(-0.5) * 3.0 + 0.5 + std::exp(0.25) * 0.5 - 0.25, 1e-14);
  auto res = oracle::check_gradients(f, {&a, &b, &st.log_var[0], &st.log_var[1]});
  EXPECT_EQ(res.failed, 0u);
  EXPECT_NEAR(st.log_var[0].grad[0], 1.0 - std::exp(-0.5) * 3.0, 1e-8);
  EXPECT_EQ(loss_strategy_from_string("uw"), LossStrategy::uw);
  EXPECT_EQ(to_string(LossStrategy::rlw), "RLW");
  EXPECT_THROW(loss_strategy_from_string("pcgrad"), ConfigError);
}

TEST(Optimizer, FirstStepByHand) {
  autograd::Parameter<double> p, q;
  p.value = Matrix<double>(1, 2, std::vector<double>{1.0, -2.0});
  p.grad = Matrix<double>(1, 2, std::vector<double>{0.5, -3.0});
  q.value = Matrix<double>(1, 1, 1.0);
  q.grad = Matrix<double>(1, 1, 2.0);
  q.group = autograd::ParamGroup::block;
  AdamW<double> opt(AdamWConfig{0.1, 0.01, 0.5, 0.9, 0.999, 0.0, std::nullopt});
  const double norm = opt.step({&p, &q}, 1.0);
  EXPECT_NEAR(norm, std::sqrt(0.25 + 9 + 4), 1e-14);
  // bias-corrected first step moves each weight by lr * sign(g) after decay
  EXPECT_NEAR(p.value[0], 1.0 * (1 - 0.05) - 0.1, 1e-12);
  EXPECT_NEAR(p.value[1], -2.0 * (1 - 0.05) + 0.1, 1e-12);
  EXPECT_NEAR(q.value[0], 1.0 * (1 - 0.005) - 0.01, 1e-12);
  EXPECT_EQ(opt.steps(), 1u);
}

TEST(Optimizer, ClipAndSchedule) {
  autograd::Parameter<double> p;
  p.value = Matrix<double>(1, 1, 0.0);
  p.grad = Matrix<double>(1, 1, 100.0);
  AdamW<double> opt(AdamWConfig{0.1, 0.1, 0.0, 0.9, 0.999, 1e-8, 1.0});
  EXPECT_NEAR(opt.step({&p}, 1.0), 100.0, 1e-12);
  EXPECT_NEAR(opt.first_moments()[0][0], 0.1 * 1.0, 1e-9);
  EXPECT_DOUBLE_EQ(cosine_lr(2.0, 0, 10), 2.0);
  EXPECT_NEAR(cosine_lr(2.0, 5, 10), 1.0, 1e-15);
  EXPECT_NEAR(cosine_lr(2.0, 10, 10), 0.0, 1e-15);
  EXPECT_NEAR(cosine_lr(2.0, 50, 10), 0.0, 1e-15);
}

TEST(Batch, TargetsAndShapes) {
  auto net = fixture::micro_net(nets::Framework::ncf);
  auto s1 = fixture::scene(1), s2 = fixture::scene(2);
  auto b = make_batch<double>({&s1, &s2}, net);
  EXPECT_EQ(b.batch_size(), 2u);
  EXPECT_EQ(b.size(), s1.voxels.size() + s2.voxels.size());
  auto x = nn_target(b, net);
  ASSERT_EQ(x.cols(), 4u);
  for (std::size_t i = 0; i < b.size(); ++i) {
    double sum = 0;
    for (double v : x.row(i)) sum += v;
    EXPECT_DOUBLE_EQ(sum, b.labels[i] < 0 ? 0.0 : -2.0);
  }
  auto bad = fixture::micro_net();
  bad.in_channels = 5;
  EXPECT_THROW(make_batch<double>({&s1}, bad), ConfigError);
  EXPECT_EQ(s1.point_labels.size(), s1.to_voxel.fine_size());
}

TEST(Batch, NoisyInputFollowsForwardProcess) {
  auto net = fixture::micro_net();
  auto s = fixture::scene(3);
  auto b = make_batch<double>({&s}, net);
  ScheduleConfig sc;
  auto sched = sc.build();
  auto rt = derive_rng(1, Stream::timestep, 0), re = derive_rng(1, Stream::noise, 0);
  auto in = draw_noisy_input(b, net, sched, rt, re);
  const double ab = sched.alpha_bar(in.t[0]);
  for (std::size_t i = 0; i < in.input.size(); ++i)
    EXPECT_NEAR(in.input[i], std::sqrt(ab) * in.x0[i] + std::sqrt(1 - ab) * in.eps[i], 1e-12);
  auto plain = fixture::micro_net(nets::Framework::plain);
  auto pin = draw_noisy_input(b, plain, sched, rt, re);
  EXPECT_EQ(pin.input, pin.x0);
}

TEST(Streams, DerivedRngIsKeyed) {
  auto a = derive_rng(1, Stream::noise, 5), b = derive_rng(1, Stream::noise, 5);
  auto c = derive_rng(1, Stream::noise, 6), d = derive_rng(1, Stream::timestep, 5), e = derive_rng(2, Stream::noise, 5);
  const auto va = a();
  EXPECT_EQ(va, b());
  EXPECT_NE(va, c());
  EXPECT_NE(va, d());
  EXPECT_NE(va, e());
}

TEST(Trainer, DetachedGradientsMatchPlainCrossEntropy) {
  auto net = fixture::micro_net();
  nets::CnfModel<double> model(net, 21);
  auto s1 = fixture::scene(4), s2 = fixture::scene(5);
  auto b = make_batch<double>({&s1, &s2}, net);
  auto sched = ScheduleConfig{}.build();
  auto rt = derive_rng(2, Stream::timestep, 0), re = derive_rng(2, Stream::noise, 0);
  const auto in = draw_noisy_input(b, net, sched, rt, re);
  BalanceState<double> bal;
  std::mt19937_64 rng(0);

  auto grads = [&] {
    std::map<std::string, Matrix<double>> out;
    for (auto& p : model.parameters().all()) out[p.name] = p.grad;
    return out;
  };
  model.parameters().zero_grad();
  {
    Graph<double> g;
    auto sg = build_losses(g, model, b, in, LossConfig{0.0, LossStrategy::ew}, bal, rng, nets::DropPath{}, true);
    g.backward(sg.total);
  }
  auto joint = grads();

  model.parameters().zero_grad();
  {
    Graph<double> g;
    auto nn = model.nn_forward(g, g.constant(in.input), b.inputs, in.t, nets::DropPath{});
    auto bn = nn.bottleneck;
    bn.values = g.constant(g.value(bn.values));
    g.backward(ce_loss(g, model.cn_forward(g, b.inputs, bn, nets::DropPath{}), b.labels));
  }
  auto ce_only = grads();
  model.parameters().zero_grad();
  {
    Graph<double> g;
    auto nn = model.nn_forward(g, g.constant(in.input), b.inputs, in.t, nets::DropPath{});
    g.backward(noise_loss(g, nn.prediction, in.eps));
  }
  auto nn_only = grads();
  for (const auto& [name, grad] : joint) {
    const bool noise_branch = name.rfind("nn.", 0) == 0;
    const auto& want = noise_branch ? nn_only[name] : ce_only[name];
    for (std::size_t k = 0; k < grad.size(); ++k) ASSERT_NEAR(grad[k], want[k], 1e-12) << name;
  }
}

TEST(Trainer, StepReportsAreDeterministic) {
  auto net = fixture::micro_net();
  auto scenes = fixture::scenes(2, 6);
  auto run = [&] {
    Trainer<float> t(net, ScheduleConfig{}, quick_train(3), LossConfig{});
    auto b = make_batch<float>({&scenes[0], &scenes[1]}, net);
    std::vector<config::json> out;
    for (int i = 0; i < 3; ++i) out.push_back(to_json(t.train_step(b, 3)));
    return out;
  };
  EXPECT_EQ(run(), run());
}

TEST(Trainer, OverfitsRepeatedBatch) {
  auto net = fixture::micro_net();
  auto scenes = fixture::scenes(2, 7);
  Trainer<float> t(net, ScheduleConfig{}, quick_train(50), LossConfig{1.0, LossStrategy::ew});
  auto b = make_batch<float>({&scenes[0], &scenes[1]}, net);
  std::vector<double> cn;
  for (int i = 0; i < 50; ++i) cn.push_back(t.train_step(b, 50).l_cn);
  double first = 0, last = 0;
  for (int i = 0; i < 5; ++i) {
    first += cn[i];
    last += cn[45 + i];
  }
  EXPECT_LT(last, 0.8 * first);
}

TEST(Trainer, CrossEntropyOnlyDescends) {
  auto net = fixture::micro_net();
  int monotone = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    nets::CnfModel<float> m(net, seed);
    auto s = fixture::scene(100 + seed);
    auto b = make_batch<float>({&s}, net);
    AdamW<float> opt(AdamWConfig{1e-3, 1e-3, 0.0, 0.9, 0.999, 1e-8, std::nullopt});
    std::vector<autograd::Parameter<float>*> ps;
    for (auto& p : m.parameters().all()) ps.push_back(&p);
    double prev = 1e30;
    bool ok = true;
    for (int i = 0; i < 15; ++i) {
      m.parameters().zero_grad();
      Graph<float> g;
      Var l = ce_loss(g, m.cn_forward(g, b.inputs, std::nullopt, nets::DropPath{}), b.labels);
      const double v = g.value(l)[0];
      ok &= v <= prev;
      prev = v;
      g.backward(l);
      opt.step(ps, 1.0);
    }
    monotone += ok;
  }
  EXPECT_GE(monotone, 18);
}

TEST(Trainer, NonFiniteLossAborts) {
  auto net = fixture::micro_net();
  auto s = fixture::scene(8);
  Trainer<float> t(net, ScheduleConfig{}, quick_train(2), LossConfig{});
  auto b = make_batch<float>({&s}, net);
  b.inputs.features(0, 0) = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(t.train_step(b, 2), NumericError);
}

TEST(Checkpoint, RoundTripAndValidation) {
  auto dir = temp_dir("ckpt");
  auto net = fixture::micro_net();
  auto scenes = fixture::scenes(2, 9);
  Trainer<float> t(net, ScheduleConfig{}, quick_train(2), LossConfig{});
  auto b = make_batch<float>({&scenes[0], &scenes[1]}, net);
  t.train_step(b, 2);
  t.save(dir / "a.ckpt", {{"note", "x"}});
  const auto saved = t.model().parameters()[3].value;
  EXPECT_FALSE(fs::exists(dir / "a.ckpt.tmp"));

  Trainer<float> u(net, ScheduleConfig{}, quick_train(2), LossConfig{});
  auto st = u.restore(dir / "a.ckpt");
  EXPECT_EQ(st.at("note"), "x");
  EXPECT_EQ(u.step(), 1u);
  EXPECT_EQ(u.optimizer().steps(), 1u);
  for (std::size_t i = 0; i < t.model().parameters().size(); ++i)
    EXPECT_EQ(t.model().parameters()[i].value, u.model().parameters()[i].value);
  for (std::size_t i = 0; i < t.optimizer().first_moments().size(); ++i)
    EXPECT_EQ(t.optimizer().second_moments()[i], u.optimizer().second_moments()[i]);
  EXPECT_EQ(to_json(t.train_step(b, 2)), to_json(u.train_step(b, 2)));

  auto f = read_checkpoint(dir / "a.ckpt");
  EXPECT_EQ(f.header.at("dtype"), "f32");
  EXPECT_EQ(f.network().nn.enc_channels, net.nn.enc_channels);
  auto m = load_model<float>(f);
  EXPECT_EQ(m->parameters()[3].value, saved);

  auto other = net;
  other.cn.enc_channels = {8, 24};
  other.cn.dec_channels = {8, 8};
  nets::CnfModel<float> wrong(other, 0);
  EXPECT_THROW(load_checkpoint(f, wrong), ConsistencyError);
  nets::CnfModel<double> dbl(net, 0);
  EXPECT_THROW(load_checkpoint(f, dbl), ConsistencyError);

  auto tampered = f;
  tampered.header["tensors"][0]["rows"] = 999;
  nets::CnfModel<float> fresh(net, 0);
  EXPECT_THROW(load_checkpoint(tampered, fresh), ShapeError);

  std::ofstream(dir / "junk.ckpt") << "not a checkpoint";
  EXPECT_THROW(read_checkpoint(dir / "junk.ckpt"), Error);
  EXPECT_THROW(read_checkpoint(dir / "missing.ckpt"), Error);
  fs::remove_all(dir);
}

TEST(TrainLoop, WritesCheckpointsAndRespectsValidationCadence) {
  auto dir = temp_dir("loop");
  auto net = fixture::micro_net();
  auto scenes = fixture::scenes(4, 10);
  auto tc = quick_train(0);
  tc.epochs = 1;
  tc.val_every = 1;
  Trainer<float> t(net, ScheduleConfig{}, tc, LossConfig{});
  int calls = 0;
  auto res = train_loop<float>(t, scenes, [&](nets::CnfModel<float>&) { return 0.1 * ++calls; }, in_dir(dir));
  EXPECT_EQ(res.total_steps, 2u);
  EXPECT_EQ(res.steps.size(), 2u);
  ASSERT_EQ(res.validations.size(), 2u);
  EXPECT_EQ(res.validations[0].step, 1u);
  EXPECT_EQ(res.validations[1].step, 2u);
  EXPECT_EQ(res.best_step, 2u);
  EXPECT_TRUE(fs::exists(dir / "best.ckpt"));
  EXPECT_TRUE(fs::exists(dir / "last.ckpt"));
  std::ifstream log(dir / "train_log.jsonl");
  std::string line;
  int lines = 0;
  while (std::getline(log, line)) {
    auto j = config::json::parse(line);
    EXPECT_TRUE(j.contains("L_nn"));
    ++lines;
  }
  EXPECT_EQ(lines, 2);
  EXPECT_EQ(epoch_order(1, 0, 5), epoch_order(1, 0, 5));
  EXPECT_NE(epoch_order(1, 0, 8), epoch_order(1, 1, 8));
  EXPECT_EQ(steps_per_epoch(5, 2), 3u);
  fs::remove_all(dir);
}

TEST(TrainLoop, ResumeMatchesUninterruptedRun) {
  auto net = fixture::micro_net();
  auto scenes = fixture::scenes(4, 11);
  auto tc = quick_train(8);
  auto a = temp_dir("resume_a"), b = temp_dir("resume_b");
  Trainer<float> full(net, ScheduleConfig{}, tc, LossConfig{});
  auto r1 = train_loop<float>(full, scenes, {}, in_dir(a));

  {
    Trainer<float> first(net, ScheduleConfig{}, tc, LossConfig{});
    auto o = in_dir(b);
    o.stop_after = 3;
    auto part = train_loop<float>(first, scenes, {}, o);
    EXPECT_EQ(part.steps.size(), 3u);
  }
  Trainer<float> second(net, ScheduleConfig{}, tc, LossConfig{});
  auto o = in_dir(b);
  o.resume = true;
  auto r2 = train_loop<float>(second, scenes, {}, o);
  ASSERT_EQ(r2.steps.size(), 5u);
  EXPECT_EQ(r2.steps.front().step, 3u);
  EXPECT_NEAR(r2.steps.back().total, r1.steps.back().total, 1e-6);
  EXPECT_EQ(to_json(r2.steps.back()), to_json(r1.steps.back()));
  for (std::size_t i = 0; i < full.model().parameters().size(); ++i)
    EXPECT_EQ(full.model().parameters()[i].value, second.model().parameters()[i].value);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(TrainConfigValidation, Rejects) {
  auto tc = quick_train(1);
  tc.lr = 0;
  EXPECT_THROW(validate(tc), ConfigError);
  tc = quick_train(1);
  tc.epochs = 0;
  EXPECT_THROW(validate(tc), ConfigError);
  LossConfig lc{-1.0, LossStrategy::ew};
  EXPECT_THROW(validate(lc), ConfigError);
}
