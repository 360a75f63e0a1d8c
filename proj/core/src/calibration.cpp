#include "claimcast/calibration.hpp"

#include <cmath>

#include "claimcast/errors.hpp"

namespace claimcast {

SmearingFactor fit_smearing_factor(std::span<const double> y_validation,
                                   std::span<const double> yhat_validation, std::string source) {
    if (y_validation.empty() || y_validation.size() != yhat_validation.size())
        throw config_error("fit_smearing_factor: inputs must be nonempty and equal length");
    double total = 0.0;
    for (std::size_t i = 0; i < y_validation.size(); ++i)
        total += std::exp(y_validation[i] - yhat_validation[i]);
    SmearingFactor factor;
    factor.b = total / static_cast<double>(y_validation.size());
    factor.n_validation = y_validation.size();
    factor.source = std::move(source);
    return factor;
}

SmearingFactor fit_smearing_factor(const Vec& y_validation, const Vec& yhat_validation,
                                   std::string source) {
    return fit_smearing_factor(
        std::span<const double>(y_validation.data(), static_cast<std::size_t>(y_validation.size())),
        std::span<const double>(yhat_validation.data(),
                                static_cast<std::size_t>(yhat_validation.size())),
        std::move(source));
}

Vec apply_correction(const Vec& yhat_test_log, const SmearingFactor& factor) {
    return (yhat_test_log.array().exp() * factor.b).matrix();
}

}  // namespace claimcast
