// Acceptance suite: one PASS/FAIL line per criterion, each with its measured value and time budget.
// Usage: acceptance [criterion numbers...]

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "model_fixtures.hpp"
#include "oracles.hpp"
#include "stgormer/checkpoint.hpp"
#include "stgormer/gradcheck.hpp"
#include "stgormer/io_util.hpp"
#include "stgormer/moe.hpp"
#include "stgormer/ops.hpp"
#include "stgormer/study.hpp"
#include "stgormer/train.hpp"

using namespace stg;

namespace {

struct Outcome {
  bool ok;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double budget_seconds;
  std::function<Outcome()> run;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

bool bitwise_equal(const NdArray& a, const NdArray& b) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::bit_cast<std::uint64_t>(a[i]) != std::bit_cast<std::uint64_t>(b[i])) return false;
  return true;
}

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "stgormer_acceptance";
  std::filesystem::create_directories(dir);
  return dir / name;
}

Outcome spd_oracle() {
  int mismatches = 0, unreachable = 0;
  for (int trial = 0; trial < 100; ++trial) {
    auto [n, edges] = oracle::random_edges(5000 + trial, 20, 0.2, true);
    SpatioTemporalGraph g(n, edges, true);
    auto got = shortest_path_matrix(g).values();
    auto want = oracle::floyd_warshall(n, g.arcs());
    if (got != want) ++mismatches;
    unreachable += static_cast<int>(std::count(want.begin(), want.end(), -1));
  }
  return {mismatches == 0 && unreachable > 0,
          "100 graphs, " + std::to_string(mismatches) + " mismatches, " + std::to_string(unreachable) +
              " unreachable pairs"};
}

Outcome full_gradcheck() {
  auto c = fixture::small_config();
  StgormerModel m(c, fixture::small_graph());
  // push zero-initialised tables and biases off zero so every path carries gradient
  Initializer init(77);
  for (std::size_t i = 0; i < m.parameters().size(); ++i) {
    auto& v = m.parameters().value(i);
    const auto& path = m.parameters().entries()[i].path;
    if (path == "spd_bias.table" || path.ends_with("bias") || path.ends_with(".b1") || path.ends_with(".b2") ||
        path.ends_with(".bq") || path.ends_with(".bv") || path.ends_with(".bo") || path.ends_with("beta"))
      v = init.uniform(v.shape(), -0.3, 0.3);
  }
  auto [x, ts] = fixture::inputs(c, 6, 3);
  auto y = oracle::random_array(Shape{1, 6, 1}, 4, -1, 1);
  auto f = [&] {
    m.reset_moe_states();
    return m.loss(m.forward(x, ts), y).total;
  };
  auto rep = finite_difference_check(f, m.parameters(), 1e-5, 400, 1);
  return {rep.coordinates_checked >= 200 && rep.max_relative_error < 1e-4,
          std::to_string(rep.coordinates_checked) + " coordinates, max rel err " + fmt(rep.max_relative_error) +
              " at " + rep.worst_path + " (tol 1e-4)"};
}

double lb_of(const std::vector<double>& f) {
  NdArray w(Shape{1, f.size()}, f);
  MoEState s(f.size());
  s.accumulate(ad::constant(w));
  return load_balance_loss(s).value().item();
}

Outcome load_balance_extremes() {
  double worst_uniform = 0;
  for (std::size_t E : {2u, 4u, 6u})
    worst_uniform = std::max(worst_uniform, std::abs(lb_of(std::vector<double>(E, 1.0 / E)) - 1.0 / (E * E)));
  std::mt19937_64 rng(21);
  std::exponential_distribution<double> expo(1.0);
  int violations = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t E = std::vector<std::size_t>{2, 4, 6}[trial % 3];
    std::vector<double> f(E);
    double s = 0;
    for (auto& v : f) s += (v = expo(rng));
    for (auto& v : f) v /= s;
    const double v = lb_of(f);
    const double lo = 1.0 / static_cast<double>(E * E), hi = 1.0 / static_cast<double>(E);
    if (!(v > lo && v <= hi)) ++violations;
  }
  // the corners of the simplex reach the upper bound
  for (std::size_t E : {2u, 4u, 6u}) {
    std::vector<double> one_hot(E, 0.0);
    one_hot[0] = 1.0;
    if (std::abs(lb_of(one_hot) - 1.0 / E) > 1e-15) ++violations;
  }
  return {worst_uniform <= 1e-12 && violations == 0,
          "uniform dev " + fmt(worst_uniform) + " (tol 1e-12), " + std::to_string(violations) +
              " of 1000 simplex points out of (1/E^2, 1/E]"};
}

Outcome ablation_equivalences() {
  const auto g = fixture::small_graph();
  const auto base = fixture::small_config();
  auto [x, ts] = fixture::inputs(base, 6, 7);
  std::vector<std::string> failed;

  auto no_bias = base;
  no_bias.use_sa_bias = false;
  StgormerModel a(no_bias, g), zero(base, g);
  fixture::set_param(a, "spd_bias.table", oracle::random_array(Shape{6}, 1));
  const double d_bias = max_abs_diff(a.forward(x, ts).value(), zero.forward(x, ts).value());
  if (!(d_bias <= 1e-12)) failed.push_back("SA_bias " + fmt(d_bias));

  auto no_t = base;
  no_t.use_t_in = false;
  StgormerModel mt(no_t, g);
  const double d_t = max_abs_diff(mt.forward(x, ts).value(),
                                  mt.forward(x, oracle::random_array(ts.shape(), 99, 0, 1)).value());
  if (d_t != 0) failed.push_back("t_in " + fmt(d_t));

  auto no_s = base;
  no_s.use_s_in = false;
  StgormerModel ms(no_s, g);
  auto before = ms.forward(x, ts).value();
  fixture::set_param(ms, "encoding.degree.in", oracle::random_array(Shape{5, 4}, 3));
  fixture::set_param(ms, "encoding.degree.out", oracle::random_array(Shape{5, 4}, 4));
  const double d_s = max_abs_diff(ms.forward(x, ts).value(), before);
  if (d_s != 0) failed.push_back("s_in " + fmt(d_s));

  auto one = base;
  one.experts = 1;
  auto plain = base;
  plain.use_moe = false;
  StgormerModel me(one, g), mp(plain, g);
  for (std::size_t i = 0; i < mp.parameters().size(); ++i) {
    std::string path = mp.parameters().entries()[i].path;
    if (auto pos = path.find(".ffn."); pos != std::string::npos) path.replace(pos, 5, ".experts.0.");
    mp.parameters().value(i) = me.parameters().get(path).value();
  }
  const double d_moe = max_abs_diff(me.forward(x, ts).value(), mp.forward(x, ts).value());
  if (!(d_moe <= 1e-12)) failed.push_back("STMoE " + fmt(d_moe));

  std::string detail = "max diffs SA_bias " + fmt(d_bias) + ", t_in " + fmt(d_t) + ", s_in " + fmt(d_s) +
                       ", E=1 vs FNN " + fmt(d_moe) + " (tol 1e-12)";
  return {failed.empty(), detail};
}

Outcome permutation_equivariance() {
  StgormerConfig c;
  c.hidden_dim = 16;
  c.heads = 2;
  c.experts = 4;
  c.block_order = "SSTT";
  c.seed = 9;
  std::mt19937_64 rng(3);
  double worst = 0;
  for (int trial = 0; trial < 10; ++trial) {
    auto [n, edges] = oracle::random_edges(300 + trial, 12, 0.25, true);
    SpatioTemporalGraph g(n, edges, true);
    const auto nn = static_cast<std::size_t>(n);
    std::vector<int> perm(nn);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    StgormerModel a(c, g), b(c, g.permuted(perm));
    auto table = oracle::random_array(Shape{static_cast<std::size_t>(c.max_spd) + 3}, trial, -1, 1);
    fixture::set_param(a, "spd_bias.table", table);
    fixture::set_param(b, "spd_bias.table", table);
    auto [x, ts] = fixture::inputs(c, nn, 50 + trial);
    NdArray xp(x.shape());
    for (std::size_t t = 0; t < c.t_in; ++t)
      for (std::size_t v = 0; v < nn; ++v) xp.at({t, static_cast<std::size_t>(perm[v]), 0}) = x.at({t, v, 0});
    auto ya = a.forward(x, ts).value();
    auto yb = b.forward(xp, ts).value();
    double scale = 0, diff = 0;
    for (std::size_t v = 0; v < nn; ++v) {
      const double want = ya.at({0, v, 0});
      scale = std::max(scale, std::abs(want));
      diff = std::max(diff, std::abs(yb.at({0, static_cast<std::size_t>(perm[v]), 0}) - want));
    }
    worst = std::max(worst, diff / scale);
  }
  return {worst < 1e-8, "10 permutations, max rel deviation " + fmt(worst) + " (tol 1e-8)"};
}

Outcome overfit() {
  SyntheticSpec spec;
  spec.nodes = 12;
  spec.steps = 2016;
  spec.period_day = 24;
  spec.period_week = 168;
  spec.noise = 0.05;
  auto data = synthesize(spec);

  RunConfig rc;
  rc.model.hidden_dim = 16;
  rc.model.heads = 2;
  rc.model.experts = 4;
  rc.model.block_order = "SSTT";
  rc.train.max_steps = 2000;
  rc.train.max_epochs = 1000;
  rc.train.patience = 1000;

  auto prepared = prepare(data.dataset, rc);
  const auto& train_flows = normalized(prepared.raw.train, prepared.normalizer).flows.values();
  const double mean = std::accumulate(train_flows.begin(), train_flows.end(), 0.0) / train_flows.size();
  double var = 0;
  for (double v : train_flows) var += (v - mean) * (v - mean);
  const double target = 0.1 * std::sqrt(var / train_flows.size());

  StgormerModel model(rc.model, data.graph);
  model.set_normalizer(prepared.normalizer);
  double best = std::numeric_limits<double>::infinity();
  long reached_at = -1;
  TrainHooks hooks;
  hooks.on_epoch_end = [&](const EpochRecord& r, StgormerModel& m) {
    const double mae = mean_absolute_error(m, prepared.train, 256);
    best = std::min(best, mae);
    if (mae < target) reached_at = r.steps;
    return reached_at >= 0;
  };
  auto h = train_loop(model, prepared.train, prepared.val, rc.train, hooks);
  std::string detail = "normalized train MAE " + fmt(best) + " vs target " + fmt(target);
  detail += reached_at >= 0 ? " reached at step " + std::to_string(reached_at)
                            : " not reached in " + std::to_string(h.total_steps) + " steps";
  return {reached_at >= 0 && reached_at <= 2000, detail};
}

Outcome split_protocol() {
  SyntheticSpec spec;
  spec.nodes = 3;
  spec.steps = 100;
  spec.period_day = 6;
  spec.period_week = 24;
  auto ds = synthesize(spec).dataset;
  auto s = split(ds);
  bool ok = s.train.steps() == 70 && s.val.steps() == 10 && s.test.steps() == 20;
  std::size_t windows = 0, straddling = 0;
  for (std::size_t t_in = 1; t_in <= 12; ++t_in)
    for (std::size_t t_out = 1; t_out <= 4; ++t_out)
      for (std::size_t stride = 1; stride <= 3; ++stride) {
        std::size_t offset = 0;
        for (const auto* part : {&s.train, &s.val, &s.test}) {
          const std::size_t len = part->steps();
          if (len >= t_in + t_out) {
            auto w = make_windows(*part, t_in, t_out, stride);
            if (w.size() != (len - t_in - t_out) / stride + 1) ++straddling;
            for (const auto& x : w) {
              ++windows;
              const std::size_t first = offset + x.start, last = first + t_in + t_out - 1;
              if (first < offset || last >= offset + len) ++straddling;
              for (std::size_t t = 0; t < t_in; ++t)
                for (std::size_t n = 0; n < 3; ++n)
                  if (x.input.at({t, n, 0}) != ds.flows.at({first + t, n, 0})) ++straddling;
              for (std::size_t t = 0; t < t_out; ++t)
                for (std::size_t n = 0; n < 3; ++n)
                  if (x.target.at({t, n, 0}) != ds.flows.at({first + t_in + t, n, 0})) ++straddling;
            }
          }
          offset += len;
        }
      }
  return {ok && straddling == 0, "split " + std::to_string(s.train.steps()) + "/" + std::to_string(s.val.steps()) +
                                     "/" + std::to_string(s.test.steps()) + ", " + std::to_string(windows) +
                                     " windows checked, " + std::to_string(straddling) + " violations"};
}

Outcome masked_metrics() {
  auto r = metrics(NdArray::vector({2, 4, 0}), NdArray::vector({3, 3, 1}), 0.0);
  bool ok = r.mae == 1.0 && r.rmse == 1.0 && r.mape == 0.375 && r.count == 2;
  int bad = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto y = oracle::random_array(Shape{6, 5, 2}, seed, -1, 5);
    auto p = oracle::random_array(Shape{6, 5, 2}, seed + 1000, -1, 5);
    const double threshold = 0.5 * static_cast<double>(seed % 5);
    double abs_sum = 0, sq_sum = 0, pct_sum = 0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (!(y[i] > threshold)) continue;
      const double e = p[i] - y[i];
      abs_sum += std::abs(e);
      sq_sum += e * e;
      pct_sum += std::abs(e) / std::abs(y[i]);
      ++count;
    }
    if (count == 0) continue;
    auto got = metrics(y, p, threshold);
    if (got.count != count || std::abs(got.mae - abs_sum / count) > 1e-12 ||
        std::abs(got.rmse - std::sqrt(sq_sum / count)) > 1e-12 || std::abs(got.mape - pct_sum / count) > 1e-12)
      ++bad;
    // forecasts at masked positions must not matter
    NdArray q = p;
    for (std::size_t i = 0; i < y.size(); ++i)
      if (!(y[i] > threshold)) q[i] = 1e6;
    if (!(metrics(y, q, threshold) == got)) ++bad;
  }
  return {ok && bad == 0, std::string("hand example ") + (ok ? "exact" : "wrong") + ", " + std::to_string(bad) +
                              " of 100 random tensors disagree"};
}

RunConfig tiny_run() {
  RunConfig rc;
  auto& m = rc.model;
  m.hidden_dim = 8;
  m.heads = 2;
  m.block_order = "ST";
  m.experts = 2;
  m.expert_expansion = 2;
  m.time_dim = 3;
  m.degree_dim = 4;
  m.max_degree = 4;
  m.max_spd = 4;
  m.t_in = 4;
  rc.train.batch_size = 16;
  rc.train.max_epochs = 3;
  rc.train.seed = 3;
  return rc;
}

SyntheticData tiny_data() {
  SyntheticSpec s;
  s.nodes = 5;
  s.steps = 160;
  s.period_day = 8;
  s.period_week = 32;
  s.seed = 11;
  return synthesize(s);
}

Outcome early_stopping() {
  auto rc = tiny_run();
  rc.train.max_epochs = 100;
  rc.train.patience = 25;
  auto data = tiny_data();
  auto prepared = prepare(data.dataset, rc);
  StgormerModel model(rc.model, data.graph);
  std::vector<NdArray> at_epoch3;
  TrainHooks hooks;
  hooks.validation_override = [](int epoch, double measured) { return epoch <= 3 ? measured / epoch : 1e9; };
  hooks.on_epoch_end = [&](const EpochRecord& r, StgormerModel& m) {
    if (r.epoch == 3) at_epoch3 = m.parameters().snapshot();
    return false;
  };
  auto h = train_loop(model, prepared.train, prepared.val, rc.train, hooks);
  bool restored = !at_epoch3.empty();
  auto now = model.parameters().snapshot();
  for (std::size_t i = 0; restored && i < now.size(); ++i) restored = bitwise_equal(now[i], at_epoch3[i]);
  const int last = h.epochs.empty() ? 0 : h.epochs.back().epoch;
  return {last == 28 && h.best_epoch == 3 && h.stopped_early && restored,
          "halted at epoch " + std::to_string(last) + ", best epoch " + std::to_string(h.best_epoch) +
              ", epoch-3 parameters " + (restored ? "restored bitwise" : "NOT restored")};
}

Outcome study_harness() {
  auto rc = tiny_run();
  rc.model.block_order = "SSSTTT";
  rc.train.max_epochs = 2;
  SyntheticSpec s;
  s.nodes = 8;
  s.steps = 336;
  s.period_day = 12;
  s.period_week = 84;
  auto data = synthesize(s).dataset;
  auto ablation = study(rc, StudyAxis::Ablation, data);
  auto order = study(rc, StudyAxis::BlockOrder, data);
  std::vector<std::string> names;
  for (const auto& r : ablation) names.push_back(r.variant);
  for (const auto& r : order) names.push_back(r.variant);
  const std::vector<std::string> want{"full",   "w/o t_in", "w/o s_in", "w/o SA_bias", "w/o STMoE",
                                      "SSSTTT", "STSTST",   "TTTSSS",   "TSTSTS"};
  const bool repeat_a = study_csv(ablation) == study_csv(study(rc, StudyAxis::Ablation, data));
  const bool repeat_o = study_csv(order) == study_csv(study(rc, StudyAxis::BlockOrder, data));
  bool finite = true;
  for (const auto* rows : {&ablation, &order})
    for (const auto& r : *rows) finite = finite && std::isfinite(r.metrics.mae) && std::isfinite(r.metrics.rmse);
  return {names == want && repeat_a && repeat_o && finite,
          std::to_string(ablation.size()) + " ablation rows, " + std::to_string(order.size()) +
              " block-order rows, reruns " + (repeat_a && repeat_o ? "identical" : "DIFFER")};
}

Outcome determinism() {
  auto rc = tiny_run();
  auto data = tiny_data();
  auto a = train_model(rc, data.dataset);
  auto b = train_model(rc, data.dataset);
  auto pa = scratch("a.ckpt"), pb = scratch("b.ckpt");
  save_checkpoint(pa, rc, a.model);
  save_checkpoint(pb, rc, b.model);
  const bool same_ckpt = detail::read_text_file(pa) == detail::read_text_file(pb);
  auto before = to_json(evaluate(a.model, a.data.raw_test, rc.data.threshold));
  auto loaded = load_checkpoint(pa);
  auto after = to_json(evaluate(loaded.model, prepare(data.dataset, loaded.config).raw_test, rc.data.threshold));
  return {same_ckpt && before == after, std::string("checkpoints ") + (same_ckpt ? "byte-identical" : "DIFFER") +
                                            ", reloaded report " + (before == after ? "identical" : "DIFFERS")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "SPD matches Floyd-Warshall", 5, spd_oracle},
      {2, "full-model gradient check", 60, full_gradcheck},
      {3, "load-balance loss extremes", 1, load_balance_extremes},
      {4, "ablation equivalences", 30, ablation_equivalences},
      {5, "node-permutation equivariance", 30, permutation_equivariance},
      {6, "overfit on synthetic data", 600, overfit},
      {7, "split protocol", 1, split_protocol},
      {8, "masked metrics", 5, masked_metrics},
      {9, "early stopping", 30, early_stopping},
      {10, "study harness", 900, study_harness},
      {11, "determinism and persistence", 120, determinism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& c : all) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool ok = out.ok && secs <= c.budget_seconds;
    if (!ok) ++failures;
    std::printf("%s %2d %s: %s [%.2fs / %.0fs]\n", ok ? "PASS" : "FAIL", c.id, c.name.c_str(), out.detail.c_str(),
                secs, c.budget_seconds);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
