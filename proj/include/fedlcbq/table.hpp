#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace fedlcbq {

// Dense step-indexed tables backing every per-(h,s,a) quantity in the library.
//
// The step index h is 1-based to mirror the episodic convention used
// throughout (h = 1..H for rewards, transitions and Q tables; h = 1..H+1 for
// value tables, whose terminal slice is identically zero). Slot h = 0 is
// allocated but never read; the small waste buys index arithmetic that can be
// checked against the update formulas at a glance.

template <typename T>
struct Table2 {
  int max_h = 0, S = 0;
  std::vector<T> data;

  Table2() = default;
  Table2(int max_h_, int S_)
      : max_h(max_h_), S(S_), data(static_cast<size_t>(max_h_ + 1) * S_, T{}) {}

  T& at(int h, int s) {
    assert(h >= 1 && h <= max_h && s >= 0 && s < S);
    return data[static_cast<size_t>(h) * S + s];
  }
  const T& at(int h, int s) const {
    assert(h >= 1 && h <= max_h && s >= 0 && s < S);
    return data[static_cast<size_t>(h) * S + s];
  }

  bool operator==(const Table2&) const = default;
};

template <typename T>
struct Table3 {
  int max_h = 0, S = 0, A = 0;
  std::vector<T> data;

  Table3() = default;
  Table3(int max_h_, int S_, int A_)
      : max_h(max_h_), S(S_), A(A_),
        data(static_cast<size_t>(max_h_ + 1) * S_ * A_, T{}) {}

  T& at(int h, int s, int a) {
    assert(h >= 1 && h <= max_h && s >= 0 && s < S && a >= 0 && a < A);
    return data[(static_cast<size_t>(h) * S + s) * A + a];
  }
  const T& at(int h, int s, int a) const {
    assert(h >= 1 && h <= max_h && s >= 0 && s < S && a >= 0 && a < A);
    return data[(static_cast<size_t>(h) * S + s) * A + a];
  }

  bool operator==(const Table3&) const = default;
};

template <typename T>
struct Table4 {
  int max_h = 0, S = 0, A = 0, S2 = 0;
  std::vector<T> data;

  Table4() = default;
  Table4(int max_h_, int S_, int A_, int S2_)
      : max_h(max_h_), S(S_), A(A_), S2(S2_),
        data(static_cast<size_t>(max_h_ + 1) * S_ * A_ * S2_, T{}) {}

  T& at(int h, int s, int a, int s2) {
    assert(h >= 1 && h <= max_h && s >= 0 && s < S && a >= 0 && a < A && s2 >= 0 && s2 < S2);
    return data[((static_cast<size_t>(h) * S + s) * A + a) * S2 + s2];
  }
  const T& at(int h, int s, int a, int s2) const {
    assert(h >= 1 && h <= max_h && s >= 0 && s < S && a >= 0 && a < A && s2 >= 0 && s2 < S2);
    return data[((static_cast<size_t>(h) * S + s) * A + a) * S2 + s2];
  }

  bool operator==(const Table4&) const = default;
};

}  // namespace fedlcbq
