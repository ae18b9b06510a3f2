#include "alphamine/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>

namespace alphamine::eval {

namespace {

using Node = dsl::AlphaFormula::Node;
using dsl::Operator;

std::atomic<std::uint64_t> g_pca_ops{0};

// Pearson over the paired values; returns false when fewer than 3 pairs or
// either side is constant.
bool pearson(const std::vector<double>& x, const std::vector<double>& y,
             double& out) {
  const std::size_t n = x.size();
  if (n < 3) return false;
  const auto [xmin, xmax] = std::minmax_element(x.begin(), x.end());
  const auto [ymin, ymax] = std::minmax_element(y.begin(), y.end());
  if (*xmin == *xmax || *ymin == *ymax) return false;
  double sx = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sx += x[i];
    sy += y[i];
  }
  const double mx = sx / static_cast<double>(n);
  const double my = sy / static_cast<double>(n);
  double cov = 0.0, vx = 0.0, vy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    cov += dx * dy;
    vx += dx * dx;
    vy += dy * dy;
  }
  if (vx <= 0.0 || vy <= 0.0) return false;
  out = cov / (std::sqrt(vx) * std::sqrt(vy));
  return true;
}

FactorPanel eval_elementwise_unary(const Operator& op, const FactorPanel& in) {
  FactorPanel out(in.rows, in.cols);
  const std::size_t n = in.values.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (!in.valid[i]) continue;
    const double x = in.values[i];
    double y;
    if (op.name == "neg") {
      y = -x;
    } else if (op.name == "abs_") {
      y = std::fabs(x);
    } else if (op.name == "sign") {
      y = x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
    } else {  // log_: natural log of |x|; zero is undefined
      if (x == 0.0) continue;
      y = std::log(std::fabs(x));
    }
    out.values[i] = y;
    out.valid[i] = 1;
  }
  return out;
}

FactorPanel eval_elementwise_binary(const Operator& op, const FactorPanel& a,
                                    const FactorPanel& b) {
  FactorPanel out(a.rows, a.cols);
  const std::size_t n = a.values.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (!a.valid[i] || !b.valid[i]) continue;
    const double x = a.values[i];
    const double y = b.values[i];
    double z;
    if (op.name == "add") {
      z = x + y;
    } else if (op.name == "sub") {
      z = x - y;
    } else if (op.name == "mul") {
      z = x * y;
    } else {  // div
      if (y == 0.0) continue;
      z = x / y;
    }
    out.values[i] = z;
    out.valid[i] = 1;
  }
  return out;
}

// Number of valid input cells for column s in rows [t-w+1, t].
struct ValidPrefix {
  std::vector<int> counts;  // counts[(t+1)*cols + s] = valid cells in rows 0..t
  int cols;

  explicit ValidPrefix(const FactorPanel& p) : cols(p.cols) {
    counts.assign(static_cast<std::size_t>(p.rows + 1) * p.cols, 0);
    for (int t = 0; t < p.rows; ++t) {
      for (int s = 0; s < p.cols; ++s) {
        counts[static_cast<std::size_t>(t + 1) * cols + s] =
            counts[static_cast<std::size_t>(t) * cols + s] +
            (p.is_valid(t, s) ? 1 : 0);
      }
    }
  }
  bool window_valid(int t, int s, int w) const {
    return counts[static_cast<std::size_t>(t + 1) * cols + s] -
               counts[static_cast<std::size_t>(t - w + 1) * cols + s] ==
           w;
  }
};

FactorPanel eval_ts_unary(const Operator& op, int w, const FactorPanel& in) {
  FactorPanel out(in.rows, in.cols);
  if (op.name == "delay" || op.name == "delta") {
    for (int t = w; t < in.rows; ++t) {
      for (int s = 0; s < in.cols; ++s) {
        if (!in.is_valid(t - w, s)) continue;
        if (op.name == "delay") {
          out.set(t, s, in.value(t - w, s));
        } else if (in.is_valid(t, s)) {
          out.set(t, s, in.value(t, s) - in.value(t - w, s));
        }
      }
    }
    return out;
  }
  const ValidPrefix prefix(in);
  std::vector<double> window(static_cast<std::size_t>(w));
  for (int s = 0; s < in.cols; ++s) {
    for (int t = w - 1; t < in.rows; ++t) {
      if (!prefix.window_valid(t, s, w)) continue;
      for (int i = 0; i < w; ++i) window[i] = in.value(t - w + 1 + i, s);
      double y;
      if (op.name == "ts_mean") {
        y = std::accumulate(window.begin(), window.end(), 0.0) / w;
      } else if (op.name == "ts_std") {
        const double mean =
            std::accumulate(window.begin(), window.end(), 0.0) / w;
        double ss = 0.0;
        for (const double v : window) ss += (v - mean) * (v - mean);
        y = std::sqrt(ss / (w - 1));
      } else if (op.name == "ts_min") {
        y = *std::min_element(window.begin(), window.end());
      } else if (op.name == "ts_max") {
        y = *std::max_element(window.begin(), window.end());
      } else {  // ts_rank: today's rank within the window, scaled to [0,1]
        const double today = window[w - 1];
        int less = 0, equal = 0;
        for (const double v : window) {
          if (v < today) ++less;
          if (v == today) ++equal;
        }
        y = (less + 0.5 * (equal - 1)) / (w - 1);
      }
      out.set(t, s, y);
    }
  }
  return out;
}

FactorPanel eval_ts_corr(int w, const FactorPanel& a, const FactorPanel& b) {
  FactorPanel out(a.rows, a.cols);
  const ValidPrefix pa(a);
  const ValidPrefix pb(b);
  for (int s = 0; s < a.cols; ++s) {
    for (int t = w - 1; t < a.rows; ++t) {
      if (!pa.window_valid(t, s, w) || !pb.window_valid(t, s, w)) continue;
      double sx = 0.0, sy = 0.0;
      double xmin = a.value(t - w + 1, s), xmax = xmin;
      double ymin = b.value(t - w + 1, s), ymax = ymin;
      for (int i = 0; i < w; ++i) {
        const double x = a.value(t - w + 1 + i, s);
        const double y = b.value(t - w + 1 + i, s);
        sx += x;
        sy += y;
        xmin = std::min(xmin, x);
        xmax = std::max(xmax, x);
        ymin = std::min(ymin, y);
        ymax = std::max(ymax, y);
      }
      if (xmin == xmax || ymin == ymax) continue;  // constant window
      const double mx = sx / w;
      const double my = sy / w;
      double cov = 0.0, vx = 0.0, vy = 0.0;
      for (int i = 0; i < w; ++i) {
        const double dx = a.value(t - w + 1 + i, s) - mx;
        const double dy = b.value(t - w + 1 + i, s) - my;
        cov += dx * dy;
        vx += dx * dx;
        vy += dy * dy;
      }
      if (vx <= 0.0 || vy <= 0.0) continue;
      out.set(t, s, cov / (std::sqrt(vx) * std::sqrt(vy)));
    }
  }
  return out;
}

// Average-tie cross-sectional ranks scaled to [0,1]; a single valid cell
// maps to the midpoint 0.5.
FactorPanel eval_cs_rank(const FactorPanel& in) {
  FactorPanel out(in.rows, in.cols);
  std::vector<std::pair<double, int>> row;
  for (int t = 0; t < in.rows; ++t) {
    row.clear();
    for (int s = 0; s < in.cols; ++s) {
      if (in.is_valid(t, s)) row.emplace_back(in.value(t, s), s);
    }
    const std::size_t m = row.size();
    if (m == 0) continue;
    if (m == 1) {
      out.set(t, row[0].second, 0.5);
      continue;
    }
    std::sort(row.begin(), row.end());
    std::size_t i = 0;
    while (i < m) {
      std::size_t j = i + 1;
      while (j < m && row[j].first == row[i].first) ++j;
      const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based
      const double scaled =
          (avg_rank - 1.0) / static_cast<double>(m - 1);
      for (std::size_t k = i; k < j; ++k) out.set(t, row[k].second, scaled);
      i = j;
    }
  }
  return out;
}

FactorPanel eval_node(const Node& node, const data::MarketDataset& ds) {
  if (node.is_leaf()) {
    if (!ds.has_panel(node.factor)) {
      throw EvalError("unknown factor '" + node.factor + "'");
    }
    return ds.panel(node.factor);
  }
  switch (node.op->kind) {
    case dsl::OpKind::kElementwiseUnary:
      return eval_elementwise_unary(*node.op, eval_node(node.children[0], ds));
    case dsl::OpKind::kElementwiseBinary:
      return eval_elementwise_binary(*node.op, eval_node(node.children[0], ds),
                                     eval_node(node.children[1], ds));
    case dsl::OpKind::kTimeSeriesUnary:
      return eval_ts_unary(*node.op, node.window,
                           eval_node(node.children[0], ds));
    case dsl::OpKind::kTimeSeriesBinary:
      return eval_ts_corr(node.window, eval_node(node.children[0], ds),
                          eval_node(node.children[1], ds));
    case dsl::OpKind::kCrossSectional:
      return eval_cs_rank(eval_node(node.children[0], ds));
  }
  throw EvalError("unreachable operator kind");
}

// Shared day loop for ic and similarity.
struct DayCorrelations {
  std::vector<double> corr;
  std::vector<std::uint8_t> valid;
  int valid_days = 0;
};

DayCorrelations day_correlations(const FactorPanel& a, const FactorPanel& b) {
  DayCorrelations out;
  out.corr.assign(a.rows, 0.0);
  out.valid.assign(a.rows, 0);
  std::vector<double> x, y;
  for (int t = 0; t < a.rows; ++t) {
    x.clear();
    y.clear();
    for (int s = 0; s < a.cols; ++s) {
      if (a.is_valid(t, s) && b.is_valid(t, s)) {
        x.push_back(a.value(t, s));
        y.push_back(b.value(t, s));
      }
    }
    double c;
    if (pearson(x, y, c)) {
      out.corr[t] = c;
      out.valid[t] = 1;
      ++out.valid_days;
    }
  }
  return out;
}

}  // namespace

AlphaMatrix evaluate(const dsl::AlphaFormula& f, const data::MarketDataset& ds) {
  AlphaMatrix out;
  out.panel = eval_node(f.root, ds);
  out.source = dsl::to_text(f);
  return out;
}

IcReport ic(const AlphaMatrix& a, const data::ReturnPanel& r) {
  if (!a.panel.same_shape(r.panel)) {
    throw EvalError("alpha/return shape mismatch");
  }
  IcReport report;
  DayCorrelations days = day_correlations(a.panel, r.panel);
  report.ic_array = std::move(days.corr);
  report.day_valid = std::move(days.valid);
  report.valid_days = days.valid_days;

  int return_days = 0;
  for (int t = 0; t < r.panel.rows; ++t) {
    for (int s = 0; s < r.panel.cols; ++s) {
      if (r.panel.is_valid(t, s)) {
        ++return_days;
        break;
      }
    }
  }
  if (return_days == 0 || report.valid_days * 2 < return_days) {
    report.valid = false;
    return report;
  }
  double sum = 0.0;
  for (int t = 0; t < a.panel.rows; ++t) {
    if (report.day_valid[t]) sum += report.ic_array[t];
  }
  report.raw_mean = sum / report.valid_days;
  report.orientation = report.raw_mean < 0.0 ? -1 : +1;
  report.ic = report.raw_mean * report.orientation;
  report.valid = true;
  return report;
}

double similarity(const AlphaMatrix& a, const AlphaMatrix& b) {
  if (!a.panel.same_shape(b.panel)) {
    throw EvalError("alpha shape mismatch");
  }
  const DayCorrelations days = day_correlations(a.panel, b.panel);
  if (days.valid_days == 0) {
    throw EvalError("similarity undefined: every day was skipped");
  }
  double sum = 0.0;
  for (int t = 0; t < a.panel.rows; ++t) {
    if (days.valid[t]) sum += days.corr[t];
  }
  return sum / days.valid_days;
}

PcScores first_pc_scores(const AlphaMatrix& a) {
  const FactorPanel& p = a.panel;
  const int t_count = p.rows;

  // Keep columns with at least 60% valid days.
  std::vector<int> kept;
  for (int s = 0; s < p.cols; ++s) {
    int valid = 0;
    for (int t = 0; t < t_count; ++t) valid += p.is_valid(t, s) ? 1 : 0;
    if (valid * 5 >= t_count * 3) kept.push_back(s);
  }
  const int n = static_cast<int>(kept.size());
  if (n < 3) {
    throw EvalError("first_pc_scores needs at least 3 processable columns");
  }

  // Mean-impute and center in one pass: imputed cells center to exactly 0.
  std::vector<double> centered(static_cast<std::size_t>(t_count) * n, 0.0);
  std::vector<std::uint8_t> day_has_data(t_count, 0);
  double total_ss = 0.0;
  for (int j = 0; j < n; ++j) {
    const int s = kept[j];
    double sum = 0.0;
    int m = 0;
    for (int t = 0; t < t_count; ++t) {
      if (p.is_valid(t, s)) {
        sum += p.value(t, s);
        ++m;
      }
    }
    const double mean = sum / m;
    for (int t = 0; t < t_count; ++t) {
      if (!p.is_valid(t, s)) continue;
      const double c = p.value(t, s) - mean;
      centered[static_cast<std::size_t>(t) * n + j] = c;
      total_ss += c * c;
      day_has_data[t] = 1;
    }
  }
  if (total_ss == 0.0) {
    throw EvalError("first_pc_scores: zero matrix after centering");
  }

  // Power iteration on X^T X through paired T x n multiplies.
  std::vector<double> loading(n);
  for (int j = 0; j < n; ++j) {
    const std::uint64_t h = Rng::mix(0x9c0ffee1u, static_cast<std::uint64_t>(j));
    loading[j] = (static_cast<double>(h >> 11) * 0x1.0p-53) - 0.5;
  }
  const auto normalize = [](std::vector<double>& v) {
    double ss = 0.0;
    for (const double x : v) ss += x * x;
    const double norm = std::sqrt(ss);
    if (norm > 0.0) {
      for (double& x : v) x /= norm;
    }
    return norm;
  };
  normalize(loading);

  std::vector<double> projected(t_count);
  std::vector<double> next(n);
  constexpr int kMaxIterations = 200;
  constexpr double kTolerance = 1e-8;
  for (int iter = 0; iter < kMaxIterations; ++iter) {
    for (int t = 0; t < t_count; ++t) {
      double acc = 0.0;
      const double* row = &centered[static_cast<std::size_t>(t) * n];
      for (int j = 0; j < n; ++j) acc += row[j] * loading[j];
      projected[t] = acc;
    }
    std::fill(next.begin(), next.end(), 0.0);
    for (int t = 0; t < t_count; ++t) {
      const double u = projected[t];
      if (u == 0.0) continue;
      const double* row = &centered[static_cast<std::size_t>(t) * n];
      for (int j = 0; j < n; ++j) next[j] += row[j] * u;
    }
    if (normalize(next) == 0.0) {
      throw EvalError("first_pc_scores: degenerate iteration");
    }
    double dot = 0.0;
    for (int j = 0; j < n; ++j) dot += next[j] * loading[j];
    if (dot < 0.0) {
      for (double& x : next) x = -x;
    }
    double delta = 0.0;
    for (int j = 0; j < n; ++j) {
      const double d = next[j] - loading[j];
      delta += d * d;
    }
    loading.swap(next);
    if (std::sqrt(delta) < kTolerance) break;
  }

  PcScores out;
  out.scores.assign(t_count, 0.0);
  out.valid.assign(t_count, 0);
  double norm_sq = 0.0;
  for (int t = 0; t < t_count; ++t) {
    if (!day_has_data[t]) continue;
    double acc = 0.0;
    const double* row = &centered[static_cast<std::size_t>(t) * n];
    for (int j = 0; j < n; ++j) acc += row[j] * loading[j];
    out.scores[t] = acc;
    out.valid[t] = 1;
    norm_sq += acc * acc;
  }
  const double norm = std::sqrt(norm_sq);
  if (norm == 0.0) {
    throw EvalError("first_pc_scores: zero score vector");
  }
  int sign_index = -1;
  double sign_mag = -1.0;
  for (int t = 0; t < t_count; ++t) {
    if (!out.valid[t]) continue;
    out.scores[t] /= norm;
    const double mag = std::fabs(out.scores[t]);
    if (mag > sign_mag) {
      sign_mag = mag;
      sign_index = t;
    }
  }
  if (sign_index >= 0 && out.scores[sign_index] < 0.0) {
    for (double& v : out.scores) v = -v;
  }
  return out;
}

double pca_similarity(const PcScores& p, const PcScores& q) {
  const std::size_t t_count = std::min(p.scores.size(), q.scores.size());
  std::vector<double> x, y;
  x.reserve(t_count);
  y.reserve(t_count);
  for (std::size_t t = 0; t < t_count; ++t) {
    if (p.valid[t] && q.valid[t]) {
      x.push_back(p.scores[t]);
      y.push_back(q.scores[t]);
    }
  }
  g_pca_ops.fetch_add(x.size(), std::memory_order_relaxed);
  if (x.size() < 10) {
    throw EvalError("pca_similarity: fewer than 10 overlapping valid days");
  }
  double corr;
  if (!pearson(x, y, corr)) return 0.0;  // degenerate scores carry no signal
  return std::min(1.0, std::fabs(corr));
}

std::uint64_t pca_comparison_ops() {
  return g_pca_ops.load(std::memory_order_relaxed);
}

void reset_pca_comparison_ops() {
  g_pca_ops.store(0, std::memory_order_relaxed);
}

}  // namespace alphamine::eval
