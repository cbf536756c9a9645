#pragma once

#include <cmath>
#include <string>

#include "qce/error.hpp"

namespace qce {

/// Constant-mobility Cahn-Hilliard parameters.
struct ModelParams {
  double mobility = 1.0;
  double eps = 0.1;   // interface width
  double beta = 0.0;  // sixth-order regularization strength

  void validate() const {
    if (!(mobility > 0.0) || !(eps > 0.0) || !(beta >= 0.0) || !std::isfinite(mobility) ||
        !std::isfinite(eps) || !std::isfinite(beta)) {
      throw InvalidArgument("model parameters require M > 0, eps > 0, beta >= 0");
    }
  }
  double inv_eps2() const { return 1.0 / (eps * eps); }
};

enum class Fold { twofold, fourfold };

inline int fold_order(Fold f) { return f == Fold::twofold ? 2 : 4; }

inline std::string to_string(Fold f) { return f == Fold::twofold ? "twofold" : "fourfold"; }

/// Anisotropy Gamma(theta) = 1 + alpha cos(m theta), m = 2 or 4.
struct GammaSpec {
  Fold fold = Fold::fourfold;
  double alpha = 0.0;

  double operator()(double theta) const {
    return 1.0 + alpha * std::cos(fold_order(fold) * theta);
  }
};

struct AnisoParams {
  ModelParams model;
  GammaSpec gamma{Fold::fourfold, 0.0};

  double alpha() const { return gamma.alpha; }

  /// The stepping path handles fourfold anisotropy with 0 <= alpha < 1/3,
  /// where Gamma >= 1 - 3 alpha > 0.
  void validate_for_stepping() const {
    model.validate();
    if (gamma.fold != Fold::fourfold) {
      throw InvalidArgument("anisotropic stepping supports the fourfold form only");
    }
    if (!(gamma.alpha >= 0.0) || !(gamma.alpha < 1.0 / 3.0)) {
      throw InvalidArgument("anisotropic stepping requires 0 <= alpha < 1/3");
    }
  }
};

}  // namespace qce
