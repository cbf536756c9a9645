#pragma once

// Uniform periodic 2-D grids, grid functions and Fourier pseudo-spectral
// differentiation. Layout is row-major with x as the slow index:
// value(i, j) lives at values[i * ny + j], x_i = ax + i*hx, y_j = ay + j*hy.

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <mutex>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qce/error.hpp"

namespace qce {

struct Grid {
  std::size_t nx = 0;
  std::size_t ny = 0;
  double ax = 0.0;
  double bx = 2.0 * std::numbers::pi;
  double ay = 0.0;
  double by = 2.0 * std::numbers::pi;

  Grid() = default;
  Grid(std::size_t nx_, std::size_t ny_, double ax_ = 0.0, double bx_ = 2.0 * std::numbers::pi,
       double ay_ = 0.0, double by_ = 2.0 * std::numbers::pi)
      : nx(nx_), ny(ny_), ax(ax_), bx(bx_), ay(ay_), by(by_) {
    validate();
  }

  void validate() const {
    if (nx < 4 || ny < 4 || nx % 2 != 0 || ny % 2 != 0) {
      throw InvalidArgument("grid sizes must be even and >= 4, got " + std::to_string(nx) + "x" +
                            std::to_string(ny));
    }
    if (!(bx > ax) || !(by > ay) || !std::isfinite(bx - ax) || !std::isfinite(by - ay)) {
      throw InvalidArgument("grid bounds must satisfy a < b");
    }
  }

  double lx() const { return bx - ax; }
  double ly() const { return by - ay; }
  double hx() const { return lx() / static_cast<double>(nx); }
  double hy() const { return ly() / static_cast<double>(ny); }
  double area() const { return lx() * ly(); }
  std::size_t size() const { return nx * ny; }
  double x(std::size_t i) const { return ax + static_cast<double>(i) * hx(); }
  double y(std::size_t j) const { return ay + static_cast<double>(j) * hy(); }

  friend bool operator==(const Grid&, const Grid&) = default;
};

/// Real grid function on a periodic grid.
class GridField {
 public:
  GridField() = default;
  explicit GridField(const Grid& grid, double fill = 0.0) : grid_(grid), values_(grid.size(), fill) {
    if (!std::isfinite(fill)) throw NonFinite("GridField fill value");
  }
  GridField(const Grid& grid, std::vector<double> values) : grid_(grid), values_(std::move(values)) {
    if (values_.size() != grid_.size()) {
      throw GridMismatch("value count " + std::to_string(values_.size()) + " does not match grid " +
                         std::to_string(grid_.nx) + "x" + std::to_string(grid_.ny));
    }
    require_finite("GridField construction");
  }

  template <class F>
  static GridField from_function(const Grid& grid, F&& f) {
    std::vector<double> v(grid.size());
    for (std::size_t i = 0; i < grid.nx; ++i)
      for (std::size_t j = 0; j < grid.ny; ++j) v[i * grid.ny + j] = f(grid.x(i), grid.y(j));
    return GridField(grid, std::move(v));
  }

  const Grid& grid() const { return grid_; }
  std::size_t size() const { return values_.size(); }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }

  double& operator()(std::size_t i, std::size_t j) { return values_[i * grid_.ny + j]; }
  double operator()(std::size_t i, std::size_t j) const { return values_[i * grid_.ny + j]; }
  double& operator[](std::size_t k) { return values_[k]; }
  double operator[](std::size_t k) const { return values_[k]; }

  bool all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
  }
  void require_finite(const std::string& where) const {
    if (!all_finite()) throw NonFinite(where);
  }

  void require_same_grid(const GridField& other) const {
    if (!(grid_ == other.grid_) || values_.size() != other.values_.size()) throw GridMismatch();
  }

  template <class F>
  GridField& apply(F&& f) {
    for (auto& v : values_) v = f(v);
    return *this;
  }

  GridField& operator+=(const GridField& o) {
    require_same_grid(o);
    for (std::size_t k = 0; k < values_.size(); ++k) values_[k] += o.values_[k];
    return *this;
  }
  GridField& operator-=(const GridField& o) {
    require_same_grid(o);
    for (std::size_t k = 0; k < values_.size(); ++k) values_[k] -= o.values_[k];
    return *this;
  }
  // Hadamard product.
  GridField& operator*=(const GridField& o) {
    require_same_grid(o);
    for (std::size_t k = 0; k < values_.size(); ++k) values_[k] *= o.values_[k];
    return *this;
  }
  GridField& operator+=(double s) {
    for (auto& v : values_) v += s;
    return *this;
  }
  GridField& operator*=(double s) {
    for (auto& v : values_) v *= s;
    return *this;
  }

  friend GridField operator+(GridField a, const GridField& b) { return a += b; }
  friend GridField operator-(GridField a, const GridField& b) { return a -= b; }
  friend GridField operator*(GridField a, const GridField& b) { return a *= b; }
  friend GridField operator*(GridField a, double s) { return a *= s; }
  friend GridField operator*(double s, GridField a) { return a *= s; }
  friend GridField operator+(GridField a, double s) { return a += s; }
  friend GridField operator-(GridField a) { return a *= -1.0; }

 private:
  Grid grid_;
  std::vector<double> values_;
};

namespace detail {

// Pairwise summation of a[k]*b[k] over [lo, hi); the split points depend only
// on the length so the result is reproducible.
inline double pairwise_dot(const double* a, const double* b, std::size_t lo, std::size_t hi) {
  if (hi - lo <= 64) {
    double s = 0.0;
    for (std::size_t k = lo; k < hi; ++k) s += a[k] * b[k];
    return s;
  }
  const std::size_t mid = lo + (hi - lo) / 2;
  return pairwise_dot(a, b, lo, mid) + pairwise_dot(a, b, mid, hi);
}

inline double pairwise_sum(const double* a, std::size_t lo, std::size_t hi) {
  if (hi - lo <= 64) {
    double s = 0.0;
    for (std::size_t k = lo; k < hi; ++k) s += a[k];
    return s;
  }
  const std::size_t mid = lo + (hi - lo) / 2;
  return pairwise_sum(a, lo, mid) + pairwise_sum(a, mid, hi);
}

inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace detail

/// Discrete inner product (a, b)_h = hx*hy*sum a_jk b_jk.
inline double inner_h(const GridField& a, const GridField& b) {
  a.require_same_grid(b);
  const auto& g = a.grid();
  return g.hx() * g.hy() * detail::pairwise_dot(a.data(), b.data(), 0, a.size());
}

inline double norm_h(const GridField& a) { return std::sqrt(inner_h(a, a)); }

inline double sum_h(const GridField& a) {
  const auto& g = a.grid();
  return g.hx() * g.hy() * detail::pairwise_sum(a.data(), 0, a.size());
}

inline double mean(const GridField& f) {
  f.require_finite("mean");
  return sum_h(f) / f.grid().area();
}

inline double norm_inf(const GridField& f) {
  double m = 0.0;
  for (double v : f.values()) m = std::max(m, std::abs(v));
  return m;
}

using Complex = std::complex<double>;
using Spectrum = std::vector<Complex>;

/// Grid geometry, wavenumbers and FFT plans. Holds scratch buffers, so a
/// workspace must not be shared between threads; create one per simulation.
class SpectralWorkspace {
 public:
  explicit SpectralWorkspace(const Grid& grid, bool dealias = false)
      : grid_(grid), nyh_(grid.ny / 2 + 1), dealias_(dealias) {
    grid_.validate();
    real_ = fftw_alloc_real(grid_.size());
    cplx_ = fftw_alloc_complex(grid_.nx * nyh_);
    {
      std::lock_guard lock(detail::fftw_planner_mutex());
      // FFTW_ESTIMATE keeps plan selection, and thus roundoff, reproducible.
      fwd_ = fftw_plan_dft_r2c_2d(static_cast<int>(grid_.nx), static_cast<int>(grid_.ny), real_,
                                  cplx_, FFTW_ESTIMATE);
      inv_ = fftw_plan_dft_c2r_2d(static_cast<int>(grid_.nx), static_cast<int>(grid_.ny), cplx_,
                                  real_, FFTW_ESTIMATE);
    }
    kx_.resize(grid_.nx);
    ky_.resize(nyh_);
    const double sx = 2.0 * std::numbers::pi / grid_.lx();
    const double sy = 2.0 * std::numbers::pi / grid_.ly();
    for (std::size_t i = 0; i < grid_.nx; ++i) {
      const auto n = static_cast<long>(grid_.nx);
      const long m = static_cast<long>(i) <= n / 2 ? static_cast<long>(i) : static_cast<long>(i) - n;
      kx_[i] = sx * static_cast<double>(m);
    }
    for (std::size_t j = 0; j < nyh_; ++j) ky_[j] = sy * static_cast<double>(j);
    k2_.resize(spectral_size());
    for (std::size_t i = 0; i < grid_.nx; ++i)
      for (std::size_t j = 0; j < nyh_; ++j) k2_[i * nyh_ + j] = kx_[i] * kx_[i] + ky_[j] * ky_[j];
  }

  SpectralWorkspace(const SpectralWorkspace&) = delete;
  SpectralWorkspace& operator=(const SpectralWorkspace&) = delete;

  ~SpectralWorkspace() {
    std::lock_guard lock(detail::fftw_planner_mutex());
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(inv_);
    fftw_free(real_);
    fftw_free(cplx_);
  }

  const Grid& grid() const { return grid_; }
  bool dealias() const { return dealias_; }
  std::size_t spectral_size() const { return grid_.nx * nyh_; }
  std::size_t half_ny() const { return nyh_; }
  double kx(std::size_t i) const { return kx_[i]; }
  double ky(std::size_t j) const { return ky_[j]; }
  /// |k|^2 in half-spectrum order.
  const std::vector<double>& k2() const { return k2_; }
  bool is_x_nyquist(std::size_t i) const { return i == grid_.nx / 2; }
  bool is_y_nyquist(std::size_t j) const { return j == grid_.ny / 2; }

  Spectrum forward(const GridField& f) {
    require_grid(f);
    std::copy(f.data(), f.data() + f.size(), real_);
    fftw_execute(fwd_);
    Spectrum out(spectral_size());
    const auto* c = reinterpret_cast<const Complex*>(cplx_);
    std::copy(c, c + out.size(), out.begin());
    if (dealias_) truncate_two_thirds(out);
    return out;
  }

  GridField inverse(const Spectrum& s) {
    if (s.size() != spectral_size()) throw GridMismatch("spectrum size mismatch");
    auto* c = reinterpret_cast<Complex*>(cplx_);
    std::copy(s.begin(), s.end(), c);
    fftw_execute(inv_);
    std::vector<double> v(grid_.size());
    const double scale = 1.0 / static_cast<double>(grid_.size());
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = real_[k] * scale;
    return GridField(grid_, std::move(v));  // rejects non-finite output
  }

  // Spectral multipliers, applied in place. Odd orders drop the Nyquist mode.
  void apply_dx(Spectrum& s) const {
    for (std::size_t i = 0; i < grid_.nx; ++i)
      for (std::size_t j = 0; j < nyh_; ++j) {
        auto& c = s[i * nyh_ + j];
        c = is_x_nyquist(i) ? Complex{} : Complex(0.0, kx_[i]) * c;
      }
  }
  void apply_dy(Spectrum& s) const {
    for (std::size_t i = 0; i < grid_.nx; ++i)
      for (std::size_t j = 0; j < nyh_; ++j) {
        auto& c = s[i * nyh_ + j];
        c = is_y_nyquist(j) ? Complex{} : Complex(0.0, ky_[j]) * c;
      }
  }
  /// Multiplies by (-|k|^2)^order.
  void apply_laplacian_power(Spectrum& s, int order) const {
    for (std::size_t k = 0; k < s.size(); ++k) {
      double m = 1.0;
      for (int o = 0; o < order; ++o) m *= -k2_[k];
      s[k] *= m;
    }
  }

  GridField dx(const GridField& f) { return differentiate(f, [this](Spectrum& s) { apply_dx(s); }); }
  GridField dy(const GridField& f) { return differentiate(f, [this](Spectrum& s) { apply_dy(s); }); }
  GridField laplacian(const GridField& f) {
    return differentiate(f, [this](Spectrum& s) { apply_laplacian_power(s, 1); });
  }
  GridField bilaplacian(const GridField& f) {
    return differentiate(f, [this](Spectrum& s) { apply_laplacian_power(s, 2); });
  }
  GridField trilaplacian(const GridField& f) {
    return differentiate(f, [this](Spectrum& s) { apply_laplacian_power(s, 3); });
  }

  /// Zeroes modes outside the central 2/3 of each index range.
  void truncate_two_thirds(Spectrum& s) const {
    const auto cx = static_cast<double>(grid_.nx) / 3.0;
    const auto cy = static_cast<double>(grid_.ny) / 3.0;
    for (std::size_t i = 0; i < grid_.nx; ++i) {
      const double mi = std::abs(kx_[i] * grid_.lx() / (2.0 * std::numbers::pi));
      for (std::size_t j = 0; j < nyh_; ++j)
        if (mi > cx || static_cast<double>(j) > cy) s[i * nyh_ + j] = Complex{};
    }
  }

 private:
  void require_grid(const GridField& f) const {
    if (!(f.grid() == grid_)) throw GridMismatch("field grid does not match workspace");
    f.require_finite("spectral transform input");
  }

  template <class Op>
  GridField differentiate(const GridField& f, Op&& op) {
    Spectrum s = forward(f);
    op(s);
    return inverse(s);
  }

  Grid grid_;
  std::size_t nyh_;
  bool dealias_;
  double* real_ = nullptr;
  fftw_complex* cplx_ = nullptr;
  fftw_plan fwd_ = nullptr;
  fftw_plan inv_ = nullptr;
  std::vector<double> kx_, ky_, k2_;
};

}  // namespace qce
