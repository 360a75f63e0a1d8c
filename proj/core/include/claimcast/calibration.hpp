#pragma once

#include <span>
#include <string>

#include "claimcast/features.hpp"

namespace claimcast {

// Duan's non-parametric smearing factor, fitted on validation-set log-dollar
// residuals and applied multiplicatively to test-set predictions so the
// log-scale median-type outputs become dollar-scale mean estimates.
struct SmearingFactor {
    double b = 1.0;
    std::size_t n_validation = 0;
    std::string source;
};

// b = (1/n) sum exp(y_i - yhat_i); inputs are on the un-normalised log-dollar
// scale.
SmearingFactor fit_smearing_factor(std::span<const double> y_validation,
                                   std::span<const double> yhat_validation,
                                   std::string source = {});
SmearingFactor fit_smearing_factor(const Vec& y_validation, const Vec& yhat_validation,
                                   std::string source = {});

// Yhat_i = exp(yhat_i) * b, elementwise.
Vec apply_correction(const Vec& yhat_test_log, const SmearingFactor& factor);

}  // namespace claimcast
