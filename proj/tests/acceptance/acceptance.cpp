// Copyright 2026 The sparselab Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance harness: one [PASS]/[FAIL] line per criterion. Usage:
//   sparselab_acceptance <work-dir> [AC1 AC5 ...]
// With no criterion names every criterion runs. The exit status is nonzero
// when any selected criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "oracles.hpp"
#include "sparselab/attention.hpp"
#include "sparselab/attention_check.hpp"
#include "sparselab/bench.hpp"
#include "sparselab/train.hpp"

namespace {

using namespace sparselab;
namespace fs = std::filesystem;
using testing::kNegInf;
using Mat = Tensor<double>;
using Clock = std::chrono::steady_clock;

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

using Rows = std::vector<std::vector<std::string>>;

Rows parse_csv(const std::string& text) {
  Rows rows;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

bool tie_free(std::span<const double> row) {
  std::vector<double> v;
  for (double x : row)
    if (x != kNegInf) v.push_back(x);
  std::sort(v.begin(), v.end());
  return std::adjacent_find(v.begin(), v.end()) == v.end();
}

// Runs the command-line tool in process; failures carry its stderr.
int tool(const std::vector<std::string>& args, std::string* error = nullptr) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  if (error) *error = err.str();
  return code;
}

// ---------------------------------------------------------------------------

Verdict ac1_gradients() {
  const auto start = Clock::now();
  constexpr double kTol = 1e-6;
  constexpr std::size_t kNeeded = 100;
  std::string detail;
  bool pass = true;
  for (Variant v : {Variant::dense, Variant::topk, Variant::sparsemax, Variant::entmax15}) {
    AttentionCheckSpec spec;
    spec.variant = v;
    std::size_t checked = 0, skipped = 0;
    double worst = 0;
    // Tied top-k instances are skipped, so draw further seeds until enough
    // tie-free instances have been checked.
    for (std::uint64_t seed = 1; checked < kNeeded; ++seed) {
      const auto s = check_attention_gradients(spec, kNeeded - checked, seed);
      checked += s.instances - s.skipped_instances;
      skipped += s.skipped_instances;
      worst = std::max(worst, s.max_rel_error);
    }
    pass = pass && worst <= kTol;
    detail += std::string(to_string(v)) + "=" + fmt("%.2e", worst) + " (" +
              std::to_string(checked) + " checked, " + std::to_string(skipped) + " skipped) ";
  }
  const double t = seconds_since(start);
  return {pass && t < 60, detail + "tol=1e-06 time=" + fmt("%.1fs", t) + " (<60s)"};
}

Verdict ac2_sparsity() {
  const auto start = Clock::now();
  Rng rng(2024);
  std::size_t rows_checked = 0, bad_rows = 0, bitwise_mismatch = 0;
  for (int inst = 0; inst < 1000; ++inst) {
    const std::size_t lq = 1 + rng.below(8);
    const std::size_t lk = 1 + rng.below(64);
    const std::size_t d = 1 + rng.below(8);
    const bool causal = rng.below(2) == 1;
    const Mat q = testing::random_tensor({lq, d}, rng);
    const Mat kx = testing::random_tensor({lk, d}, rng);
    const Mat v = testing::random_tensor({lk, d}, rng);
    const Mat p = apply_structural_mask(attention_scores(q, kx), causal);
    bool ok = true;
    for (std::size_t i = 0; i < lq; ++i) ok = ok && tie_free(p.row(i));
    if (!ok) {
      --inst;  // redraw: the exact-count property is stated for tie-free rows
      continue;
    }
    const std::size_t k = 1 + rng.below(lk + 2);
    const Mat a = normalize_rows(p, Variant::topk, k);
    for (std::size_t i = 0; i < lq; ++i) {
      const std::vector<double> row(p.row(i).begin(), p.row(i).end());
      const auto keep = testing::sort_topk_mask(row, k);
      std::size_t finite = 0, nonzero = 0;
      bool positions = true;
      for (std::size_t j = 0; j < lk; ++j) {
        finite += row[j] != kNegInf;
        nonzero += a(i, j) != 0;
        positions = positions && ((a(i, j) != 0) == (keep[j] != kNegInf));
      }
      ++rows_checked;
      if (nonzero != std::min(k, finite) || !positions) ++bad_rows;
    }
    // k >= l_K must reproduce dense attention bit for bit.
    const std::size_t big = rng.below(2) ? kAllKeys : lk + rng.below(4);
    const auto dense = single_head_attention(q, kx, v, Variant::dense, 1, causal);
    const auto topk = single_head_attention(q, kx, v, Variant::topk, big, causal);
    if (!(dense.output == topk.output) || !(dense.weights.front() == topk.weights.front()))
      ++bitwise_mismatch;
  }
  const double t = seconds_since(start);
  return {bad_rows == 0 && bitwise_mismatch == 0 && t < 10,
          "1000 matrices, " + std::to_string(rows_checked) + " rows, " +
              std::to_string(bad_rows) + " bad rows, " + std::to_string(bitwise_mismatch) +
              " dense mismatches, time=" + fmt("%.2fs", t) + " (<10s)"};
}

Verdict ac3_oracles() {
  const auto start = Clock::now();
  Rng rng(7);
  double sp_err = 0, ent_err = 0;
  for (int inst = 0; inst < 500; ++inst) {
    const std::size_t n = 1 + rng.below(6);
    const double scale = rng.uniform(0.1, 4);
    const Mat x = testing::random_tensor({1, n}, rng, -scale, scale);
    const std::vector<double> xv(x.values().begin(), x.values().end());
    const auto sp = sparsemax_rows(x);
    const auto sp_ref = testing::brute_sparsemax(xv);
    for (std::size_t j = 0; j < n; ++j) sp_err = std::max(sp_err, std::abs(sp(0, j) - sp_ref[j]));
  }
  for (int inst = 0; inst < 500; ++inst) {
    const std::size_t n = 1 + rng.below(6);
    const double scale = rng.uniform(0.1, 6);
    const Mat x = testing::random_tensor({1, n}, rng, -scale, scale);
    const std::vector<double> xv(x.values().begin(), x.values().end());
    const auto ent = entmax15_rows(x);
    const auto ent_ref = testing::bisect_entmax15(xv);
    for (std::size_t j = 0; j < n; ++j) ent_err = std::max(ent_err, std::abs(ent(0, j) - ent_ref[j]));
  }
  const double t = seconds_since(start);
  return {sp_err <= 1e-9 && ent_err <= 1e-7 && t < 30,
          "sparsemax max|err|=" + fmt("%.2e", sp_err) + " (<=1e-9), entmax15 max|err|=" +
              fmt("%.2e", ent_err) + " (<=1e-7), 500 each, time=" + fmt("%.2fs", t) + " (<30s)"};
}

Verdict ac4_jacobian() {
  const auto start = Clock::now();
  Rng rng(44);
  double worst = 0;
  std::size_t entries = 0;
  for (int inst = 0; inst < 50; ++inst) {
    const std::size_t lq = 2 + rng.below(4);
    const std::size_t lk = 3 + rng.below(6);
    const std::size_t k = 1 + rng.below(lk - 1);
    const Mat p = testing::random_tensor({lq, lk}, rng, -2, 2);
    const Mat mask = topk_mask(p, k);
    const auto jac = testing::numeric_jacobian(
        [&](const std::vector<double>& in) {
          const Mat a = normalize_rows(Mat({lq, lk}, in), Variant::topk, k);
          return std::vector<double>(a.values().begin(), a.values().end());
        },
        {p.values().begin(), p.values().end()}, 1e-6);
    for (std::size_t r = 0; r < lq * lk; ++r) {
      for (std::size_t c = 0; c < lq * lk; ++c) {
        if (r / lk != c / lk || mask[c] == kNegInf) {
          worst = std::max(worst, std::abs(jac[r][c]));
          ++entries;
        }
      }
    }
  }
  const double t = seconds_since(start);
  return {worst <= 1e-8 && t < 30,
          "50 instances, " + std::to_string(entries) + " off-row/dropped entries, max|dA/dP|=" +
              fmt("%.2e", worst) + " (<=1e-8), time=" + fmt("%.2fs", t) + " (<30s)"};
}

// Training runs shared by the learning criteria.
struct Runs {
  bool done = false;
  TrainReport topk, dense, train_only;
  Transformer<float> train_only_model{ModelConfig{}};
  double seconds = 0;
};

ModelConfig desk_model(Variant v, std::size_t k) {
  ModelConfig m;
  m.attention.variant = v;
  m.attention.k = k;
  return m;
}

TrainOptions desk_options() {
  TrainOptions o;
  o.steps = 3000;
  o.target_token_accuracy = 0.999;
  return o;
}

Runs& runs() {
  static Runs r;
  if (!r.done) {
    const auto start = Clock::now();
    const TaskSpec task;  // copy, seq_len 8, vocab 16
    r.topk = train<float>(desk_model(Variant::topk, 4), task, desk_options()).report;
    r.dense = train<float>(desk_model(Variant::dense, 8), task, desk_options()).report;
    ModelConfig t = desk_model(Variant::topk, 4);
    t.attention.sparsify_phase = SparsifyPhase::train_only;
    auto res = train<float>(t, task, desk_options());
    r.train_only = res.report;
    r.train_only_model = std::move(res.model);
    r.seconds = seconds_since(start);
    r.done = true;
  }
  return r;
}

std::string describe(const char* name, const TrainReport& r) {
  return std::string(name) + " acc=" + fmt("%.4f", r.final_metrics.token_accuracy) + " in " +
         std::to_string(r.steps_run) + " steps (" + fmt("%.0fs", r.wall_seconds) + ")";
}

Verdict ac5_learning() {
  const Runs& r = runs();
  const double t = r.topk.wall_seconds + r.dense.wall_seconds;
  const bool pass = r.topk.final_metrics.token_accuracy >= 0.99 &&
                    r.dense.final_metrics.token_accuracy >= 0.99 && r.topk.steps_run <= 3000 &&
                    r.dense.steps_run <= 3000 && !r.topk.diverged && !r.dense.diverged && t < 600;
  return {pass, describe("topk k=4", r.topk) + ", " + describe("dense", r.dense) +
                    "; threshold 0.99 within 3000 steps, time=" + fmt("%.0fs", t) + " (<600s)"};
}

Verdict ac6_train_only() {
  Runs& r = runs();
  const TaskData data = generate_task(TaskSpec{});
  const Transformer<float>& sparse = r.train_only_model;
  ModelConfig dense_cfg = sparse.config();
  dense_cfg.attention.variant = Variant::dense;
  dense_cfg.attention.sparsify_phase = SparsifyPhase::train_and_predict;
  const Transformer<float> dense(dense_cfg, sparse.parameters());
  bool equal = greedy_decode(sparse, std::span<const Example>(data.eval), SparsifyPhase::train_only) ==
               greedy_decode(dense, std::span<const Example>(data.eval),
                             SparsifyPhase::train_and_predict);
  for (std::size_t i = 0; i < 20; ++i) {
    const auto& ex = data.eval[i];
    std::vector<int> tgt{kBosToken};
    tgt.insert(tgt.end(), ex.target.begin(), ex.target.end() - 1);
    equal = equal && sparse.logits(ex.source, tgt) == dense.logits(ex.source, tgt);
  }
  const double acc = r.train_only.final_metrics.token_accuracy;
  const double base = r.dense.final_metrics.token_accuracy;
  return {equal && acc >= base - 0.01,
          std::string("eval outputs identical to dense: ") + (equal ? "yes" : "no") + "; " +
              describe("train_only", r.train_only) + " vs dense " + fmt("%.4f", base) +
              " (need >= dense - 0.01)"};
}

Verdict ac7_speed() {
  const auto start = Clock::now();
  bool pass = true;
  std::string detail;
  for (std::size_t l : {64, 256}) {
    BenchShape shape;
    shape.l_q = l;
    shape.l_k = l;
    auto median = [&](Variant v) {
      return bench_attention<float>(v, shape, BenchMode::forward_backward, 30, 5).median_s;
    };
    const double dense = median(Variant::dense);
    const double topk = median(Variant::topk);
    const double sparsemax = median(Variant::sparsemax);
    const double vs_sparsemax = topk / sparsemax, vs_dense = topk / dense;
    pass = pass && vs_sparsemax <= 1.0 && vs_dense <= 1.5;
    detail += "l_K=" + std::to_string(l) + ": topk/sparsemax=" + fmt("%.2f", vs_sparsemax) +
              " (<=1.0) topk/dense=" + fmt("%.2f", vs_dense) + " (<=1.5); ";
  }
  const double t = seconds_since(start);
  return {pass && t < 300, detail + "time=" + fmt("%.0fs", t) + " (<300s)"};
}

Verdict ac8_sweep(const fs::path& work) {
  const auto start = Clock::now();
  const fs::path out = work / "sweep";
  std::string err;
  const int code = tool({"sweep", "--ks", "1,2,4,8,16,inf", "--seeds", "1,2,3", "--out",
                         out.string()},
                        &err);
  if (code != 0) return {false, "sweep exited with " + std::to_string(code) + ": " + err};
  const Rows rows = parse_csv(slurp(out / "sweep.csv"));
  const std::vector<std::string> header{"k", "mean_acc", "std_acc", "n_seeds"};
  bool well_formed = rows.size() == 7 && rows[0] == header;
  double k8 = -1, inf = -1;
  std::string means;
  const std::vector<std::string> ks{"1", "2", "4", "8", "16", "inf"};
  for (std::size_t i = 1; well_formed && i < rows.size(); ++i) {
    well_formed = rows[i].size() == 4 && rows[i][0] == ks[i - 1] && rows[i][3] == "3";
    if (!well_formed) break;
    const double mean = std::stod(rows[i][1]);
    const double sd = std::stod(rows[i][2]);
    well_formed = mean >= 0 && mean <= 1 && sd >= 0;
    if (rows[i][0] == "8") k8 = mean;
    if (rows[i][0] == "inf") inf = mean;
    means += rows[i][0] + ":" + fmt("%.4f", mean) + " ";
  }
  const double t = seconds_since(start);
  return {well_formed && k8 >= inf - 0.01,
          std::string("csv well-formed: ") + (well_formed ? "yes" : "no") + "; means " + means +
              "(need k=8 >= inf - 0.01), time=" + fmt("%.0fs", t)};
}

struct HeatRow {
  std::vector<int> pixels;
  std::vector<double> weights;
  std::size_t admissible = 0;
};

// Reads matching PGM and CSV heatmaps from two viz runs of the same model.
std::vector<HeatRow> heat_rows(const fs::path& pgm_dir, const fs::path& csv_dir,
                               std::size_t* files) {
  std::vector<HeatRow> rows;
  *files = 0;
  for (const auto& e : fs::directory_iterator(pgm_dir)) {
    if (e.path().extension() != ".pgm") continue;
    ++*files;
    std::istringstream pgm(slurp(e.path()));
    std::string magic;
    std::size_t w = 0, h = 0, maxval = 0;
    pgm >> magic >> w >> h >> maxval;
    const Rows csv = parse_csv(slurp(csv_dir / e.path().stem().concat(".csv")));
    const bool causal = e.path().filename().string().starts_with("dec-self");
    for (std::size_t i = 0; i < h; ++i) {
      HeatRow r;
      for (std::size_t j = 0; j < w; ++j) {
        int px = 0;
        pgm >> px;
        r.pixels.push_back(px);
        r.weights.push_back(std::stod(csv.at(i).at(j)));
      }
      r.admissible = causal ? std::min(i + 1, w) : w;
      rows.push_back(std::move(r));
    }
  }
  return rows;
}

// A row is tie-free at the threshold when its smallest kept weight is unique.
bool threshold_tie_free(const HeatRow& r) {
  double smallest = 2;
  for (double w : r.weights)
    if (w > 0) smallest = std::min(smallest, w);
  return std::count(r.weights.begin(), r.weights.end(), smallest) == 1;
}

Verdict ac9_heatmaps(const fs::path& work) {
  constexpr std::size_t k = 4;
  std::string err;
  for (const char* variant : {"topk", "dense"}) {
    const fs::path run = work / "viz" / variant;
    if (tool({"train", "--variant", variant, "--k", std::to_string(k), "--out", run.string()},
             &err) != 0)
      return {false, std::string("train ") + variant + " failed: " + err};
    for (const char* format : {"pgm", "csv"}) {
      if (tool({"viz", "--model", (run / "model.txt").string(), "--format", format, "--out",
                (run / format).string()},
               &err) != 0)
        return {false, std::string("viz failed: ") + err};
    }
  }
  std::size_t topk_files = 0, dense_files = 0;
  const auto topk = heat_rows(work / "viz/topk/pgm", work / "viz/topk/csv", &topk_files);
  const auto dense = heat_rows(work / "viz/dense/pgm", work / "viz/dense/csv", &dense_files);

  std::size_t tie_free = 0, over_k = 0, max_nonzero = 0;
  for (const auto& r : topk) {
    if (!threshold_tie_free(r)) continue;
    ++tie_free;
    const std::size_t nz = r.pixels.size() - std::count(r.pixels.begin(), r.pixels.end(), 0);
    max_nonzero = std::max(max_nonzero, nz);
    over_k += nz > k;
  }
  double dense_sum = 0;
  std::size_t dense_rows = 0;
  for (const auto& r : dense) {
    if (r.admissible <= k) continue;
    dense_sum += static_cast<double>(r.pixels.size() - std::count(r.pixels.begin(), r.pixels.end(), 0));
    ++dense_rows;
  }
  const double dense_mean = dense_rows ? dense_sum / static_cast<double>(dense_rows) : 0;
  const bool pass = topk_files == 24 && dense_files == 24 && tie_free > 0 && over_k == 0 &&
                    dense_mean > static_cast<double>(k);
  return {pass, "topk k=4: " + std::to_string(tie_free) + "/" + std::to_string(topk.size()) +
                    " tie-free rows, max nonzero pixels " + std::to_string(max_nonzero) +
                    " (<=4); dense: mean nonzero pixels " + fmt("%.2f", dense_mean) + " over " +
                    std::to_string(dense_rows) + " rows with >4 admissible keys (>4); files " +
                    std::to_string(topk_files) + "+" + std::to_string(dense_files)};
}

// Timing columns of bench.csv are measurements, not artifacts of the
// configuration; everything else must replay exactly.
std::string without_timing(const std::string& csv) {
  std::string out;
  for (const auto& row : parse_csv(csv)) {
    for (std::size_t i = 0; i < row.size() && i < 10; ++i) out += row[i] + ",";
    out += "\n";
  }
  return out;
}

Verdict ac10_replay(const fs::path& work) {
  struct Case {
    std::string name;
    std::vector<std::string> args;
    std::vector<std::string> artifacts;
    bool timing = false;
  };
  const fs::path base = work / "replay";
  const std::string model = (base / "train" / "model.txt").string();
  const std::vector<Case> cases{
      {"train",
       {"train", "--steps", "200", "--variant", "topk", "--k", "4", "--seed", "3"},
       {"train_report.csv"}},
      {"eval", {"eval", "--model", model, "--seed", "3"}, {"eval_report.csv"}},
      {"sweep",
       {"sweep", "--ks", "2,inf", "--seeds", "1,2", "--steps", "100", "--n-train", "500"},
       {"sweep.csv"}},
      {"bench",
       {"bench", "--variants", "dense,topk,sparsemax,entmax15", "--lk", "32", "--batch", "2"},
       {"bench.csv"},
       true},
      {"viz", {"viz", "--model", model, "--format", "csv"}, {}},
      {"gradcheck", {"gradcheck", "--instances", "20", "--force-ties"}, {"gradcheck.csv"}},
  };
  std::string detail;
  bool pass = true;
  for (const auto& c : cases) {
    const fs::path first = base / c.name, second = base / (c.name + "_replay");
    std::vector<std::string> args = c.args;
    args.insert(args.end(), {"--out", first.string()});
    std::string err;
    const int code = tool(args, &err);
    const int replay = tool({c.name, "--config", (first / "config.txt").string(), "--out",
                             second.string()},
                            &err);
    std::vector<std::string> artifacts = c.artifacts;
    if (artifacts.empty()) {
      for (const auto& e : fs::directory_iterator(first))
        if (e.path().extension() == ".csv") artifacts.push_back(e.path().filename().string());
      std::sort(artifacts.begin(), artifacts.end());
    }
    bool same = code == replay && !artifacts.empty();
    for (const auto& a : artifacts) {
      const std::string x = slurp(first / a), y = slurp(second / a);
      same = same && !x.empty() && (c.timing ? without_timing(x) == without_timing(y) : x == y);
    }
    pass = pass && same;
    detail += c.name + (same ? ":same" : ":DIFFERENT") + "(" + std::to_string(artifacts.size()) +
              " csv) ";
  }
  return {pass, detail + "[bench compares all but its timing columns]"};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "sparselab_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);
  std::set<std::string> selected;
  for (int i = 2; i < argc; ++i) selected.insert(argv[i]);

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"AC1", ac1_gradients},
      {"AC2", ac2_sparsity},
      {"AC3", ac3_oracles},
      {"AC4", ac4_jacobian},
      {"AC5", ac5_learning},
      {"AC6", ac6_train_only},
      {"AC7", ac7_speed},
      {"AC8", [&] { return ac8_sweep(work); }},
      {"AC9", [&] { return ac9_heatmaps(work); }},
      {"AC10", [&] { return ac10_replay(work); }},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    if (!selected.empty() && !selected.contains(name)) continue;
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failures += !v.pass;
    std::cout << (v.pass ? "[PASS] " : "[FAIL] ") << name << ": " << v.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
