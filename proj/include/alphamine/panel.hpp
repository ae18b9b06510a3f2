#pragma once

#include <cstdint>
#include <vector>

namespace alphamine {

// Dense day-by-stock matrix with a validity mask. Row = trading day,
// column = stock. Invalid cells carry no numeric meaning; every statistic
// must skip them.
struct FactorPanel {
  int rows = 0;
  int cols = 0;
  std::vector<double> values;        // row-major
  std::vector<std::uint8_t> valid;

  FactorPanel() = default;
  FactorPanel(int t, int n)
      : rows(t),
        cols(n),
        values(static_cast<std::size_t>(t) * n, 0.0),
        valid(static_cast<std::size_t>(t) * n, 0) {}

  std::size_t index(int t, int s) const {
    return static_cast<std::size_t>(t) * cols + s;
  }
  double value(int t, int s) const { return values[index(t, s)]; }
  bool is_valid(int t, int s) const { return valid[index(t, s)] != 0; }
  void set(int t, int s, double v) {
    const std::size_t i = index(t, s);
    values[i] = v;
    valid[i] = 1;
  }
  void set_invalid(int t, int s) {
    const std::size_t i = index(t, s);
    values[i] = 0.0;
    valid[i] = 0;
  }
  bool same_shape(const FactorPanel& other) const {
    return rows == other.rows && cols == other.cols;
  }
  std::size_t valid_count() const {
    std::size_t n = 0;
    for (const auto v : valid) n += v;
    return n;
  }

  bool operator==(const FactorPanel&) const = default;
};

}  // namespace alphamine
