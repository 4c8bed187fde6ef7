#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace fnet {

using i64 = std::int64_t;
using Shape = std::vector<i64>;

template <class T>
struct is_complex : std::false_type {};
template <class R>
struct is_complex<std::complex<R>> : std::true_type {};
template <class T>
inline constexpr bool is_complex_v = is_complex<T>::value;

/// Scalar type underlying T: float for complex<float>, T otherwise.
template <class T>
struct real_of {
  using type = T;
};
template <class R>
struct real_of<std::complex<R>> {
  using type = R;
};
template <class T>
using real_of_t = typename real_of<T>::type;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ", ";
    os << s[i];
  }
  os << ")";
  return os.str();
}

namespace detail {
[[noreturn]] inline void fail(const std::string& msg) { throw std::invalid_argument(msg); }

inline void check(bool ok, const std::string& msg) {
  if (!ok) fail(msg);
}
}  // namespace detail

inline i64 shape_size(const Shape& s) {
  i64 n = 1;
  for (i64 d : s) n *= d;
  return n;
}

inline Shape row_major_strides(const Shape& s) {
  Shape st(s.size(), 1);
  for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i) st[i] = st[i + 1] * s[i + 1];
  return st;
}

/// Dense row-major n-d array. Rank and shape are runtime values; element type
/// is one of float, double, std::complex<float/double>, std::int32_t.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    validate_shape();
    data_.assign(static_cast<std::size_t>(shape_size(shape_)), T{});
  }

  Tensor(Shape shape, T fill) : shape_(std::move(shape)) {
    validate_shape();
    data_.assign(static_cast<std::size_t>(shape_size(shape_)), fill);
  }

  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape();
    detail::check(static_cast<i64>(data_.size()) == shape_size(shape_),
                  "tensor data size " + std::to_string(data_.size()) + " does not match shape " +
                      shape_str(shape_));
  }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  i64 dim(int axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
  i64 size() const { return static_cast<i64>(data_.size()); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  T& operator[](i64 i) { return data_[static_cast<std::size_t>(i)]; }
  const T& operator[](i64 i) const { return data_[static_cast<std::size_t>(i)]; }

  T& at(std::initializer_list<i64> idx) { return data_[flat_index(idx)]; }
  const T& at(std::initializer_list<i64> idx) const { return data_[flat_index(idx)]; }

  auto begin() { return data_.begin(); }
  auto end() { return data_.end(); }
  auto begin() const { return data_.begin(); }
  auto end() const { return data_.end(); }

  /// Same storage under a new shape of identical total size.
  Tensor reshaped(Shape s) const {
    detail::check(shape_size(s) == size(), "reshape from " + shape_str(shape_) + " to " +
                                               shape_str(s) + " changes element count");
    Tensor out;
    out.shape_ = std::move(s);
    out.data_ = data_;
    return out;
  }

 private:
  std::size_t flat_index(std::initializer_list<i64> idx) const {
    detail::check(static_cast<int>(idx.size()) == rank(), "index rank mismatch for shape " +
                                                              shape_str(shape_));
    i64 flat = 0;
    int a = 0;
    for (i64 v : idx) {
      flat = flat * shape_[static_cast<std::size_t>(a)] + v;
      ++a;
    }
    return static_cast<std::size_t>(flat);
  }

  void validate_shape() const {
    detail::check(!shape_.empty(), "tensor shape must have at least one dimension");
    for (i64 d : shape_)
      detail::check(d > 0, "tensor shape " + shape_str(shape_) + " has a non-positive dimension");
  }

  Shape shape_;
  std::vector<T> data_;
};

namespace detail {
template <class T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape())
    fail(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
         shape_str(b.shape()));
}
}  // namespace detail

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "add");
  Tensor<T> out(a.shape());
  for (i64 i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "sub");
  Tensor<T> out(a.shape());
  for (i64 i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "mul");
  Tensor<T> out(a.shape());
  for (i64 i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

template <class T, class S>
Tensor<T> scale(const Tensor<T>& a, S s) {
  Tensor<T> out(a.shape());
  for (i64 i = 0; i < a.size(); ++i) out[i] = a[i] * static_cast<T>(s);
  return out;
}

template <class R>
Tensor<std::complex<R>> scale(const Tensor<std::complex<R>>& a, R s) {
  Tensor<std::complex<R>> out(a.shape());
  for (i64 i = 0; i < a.size(); ++i) out[i] = a[i] * s;
  return out;
}

template <class R>
Tensor<std::complex<R>> conj(const Tensor<std::complex<R>>& a) {
  Tensor<std::complex<R>> out(a.shape());
  for (i64 i = 0; i < a.size(); ++i) out[i] = std::conj(a[i]);
  return out;
}

template <class R>
Tensor<R> real(const Tensor<std::complex<R>>& a) {
  Tensor<R> out(a.shape());
  for (i64 i = 0; i < a.size(); ++i) out[i] = a[i].real();
  return out;
}

template <class R>
Tensor<R> imag(const Tensor<std::complex<R>>& a) {
  Tensor<R> out(a.shape());
  for (i64 i = 0; i < a.size(); ++i) out[i] = a[i].imag();
  return out;
}

template <class T>
Tensor<real_of_t<T>> abs(const Tensor<T>& a) {
  Tensor<real_of_t<T>> out(a.shape());
  for (i64 i = 0; i < a.size(); ++i) out[i] = std::abs(a[i]);
  return out;
}

template <class R>
Tensor<std::complex<R>> to_complex(const Tensor<R>& a) {
  Tensor<std::complex<R>> out(a.shape());
  for (i64 i = 0; i < a.size(); ++i) out[i] = std::complex<R>(a[i], R(0));
  return out;
}

template <class To, class From>
Tensor<To> cast(const Tensor<From>& a) {
  Tensor<To> out(a.shape());
  for (i64 i = 0; i < a.size(); ++i) out[i] = static_cast<To>(a[i]);
  return out;
}

template <class T>
T sum(const Tensor<T>& a) {
  T s{};
  for (i64 i = 0; i < a.size(); ++i) s += a[i];
  return s;
}

template <class T>
T mean(const Tensor<T>& a) {
  return sum(a) / static_cast<real_of_t<T>>(a.size());
}

/// Real inner product Re<a, b> = sum Re(a_i * conj(b_i)).
template <class T>
real_of_t<T> dot_real(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "dot_real");
  real_of_t<T> s = 0;
  for (i64 i = 0; i < a.size(); ++i) {
    if constexpr (is_complex_v<T>)
      s += (a[i] * std::conj(b[i])).real();
    else
      s += a[i] * b[i];
  }
  return s;
}

template <class T>
real_of_t<T> norm_sq(const Tensor<T>& a) {
  real_of_t<T> s = 0;
  for (i64 i = 0; i < a.size(); ++i) s += std::norm(a[i]);
  return s;
}

template <class T>
real_of_t<T> norm_l2(const Tensor<T>& a) {
  return std::sqrt(norm_sq(a));
}

template <class T>
real_of_t<T> max_abs(const Tensor<T>& a) {
  real_of_t<T> m = 0;
  for (i64 i = 0; i < a.size(); ++i) m = std::max<real_of_t<T>>(m, std::abs(a[i]));
  return m;
}

template <class T>
real_of_t<T> max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "max_abs_diff");
  real_of_t<T> m = 0;
  for (i64 i = 0; i < a.size(); ++i) m = std::max<real_of_t<T>>(m, std::abs(a[i] - b[i]));
  return m;
}

/// Relative L2 distance ||a - b|| / max(||b||, eps).
template <class T>
real_of_t<T> rel_l2(const Tensor<T>& a, const Tensor<T>& b,
                    real_of_t<T> eps = real_of_t<T>(1e-30)) {
  detail::check_same_shape(a, b, "rel_l2");
  real_of_t<T> num = 0, den = 0;
  for (i64 i = 0; i < a.size(); ++i) {
    num += std::norm(a[i] - b[i]);
    den += std::norm(b[i]);
  }
  return std::sqrt(num) / std::max(std::sqrt(den), eps);
}

/// Stack n equally shaped tensors along a new leading axis.
template <class T>
Tensor<T> stack(const std::vector<Tensor<T>>& parts) {
  detail::check(!parts.empty(), "stack: needs at least one tensor");
  for (const auto& p : parts) detail::check_same_shape(parts.front(), p, "stack");
  Shape out_shape;
  out_shape.push_back(static_cast<i64>(parts.size()));
  for (i64 d : parts.front().shape()) out_shape.push_back(d);
  Tensor<T> out(out_shape);
  const i64 n = parts.front().size();
  for (std::size_t c = 0; c < parts.size(); ++c)
    std::copy(parts[c].data(), parts[c].data() + n, out.data() + static_cast<i64>(c) * n);
  return out;
}

/// Slice of a leading-axis stack: element c of shape tail(shape).
template <class T>
Tensor<T> unstack(const Tensor<T>& t, i64 c) {
  detail::check(t.rank() >= 2, "unstack: tensor must have a leading axis");
  detail::check(c >= 0 && c < t.dim(0), "unstack: index out of range");
  Shape tail(t.shape().begin() + 1, t.shape().end());
  Tensor<T> out(tail);
  const i64 n = out.size();
  std::copy(t.data() + c * n, t.data() + (c + 1) * n, out.data());
  return out;
}

}  // namespace fnet
