/**
 * @file estimation.hpp
 * @brief Gestational age and estimated fetal weight from complete biometry
 *
 * Inputs are in centimeters. Both regressions evaluate their terms in the
 * published order so results are bit-reproducible.
 */
#pragma once

#include "fetometry/biometry.hpp"
#include "fetometry/error.hpp"

#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace fetometry {

struct GestAge {
    double weeks = 0.0;
};

struct FetalWeight {
    double grams = 0.0;
};

/// Raw dating polynomial with no input validation.
inline double ga_polynomial(double hc, double bpd, double ac, double fl) {
    double ga = 10.6;
    ga -= 0.168 * bpd;
    ga += 0.045 * hc;
    ga += 0.03 * ac;
    ga += 0.058 * fl;
    ga += 0.002 * (bpd * bpd);
    ga += 0.002 * (fl * fl);
    ga += 0.0005 * (bpd * ac);
    ga -= 0.005 * (bpd * fl);
    ga -= 0.0002 * (hc * ac);
    ga += 0.0008 * (hc * fl);
    ga += 0.0005 * (ac * fl);
    return ga;
}

/// Hadlock III exponent, log10 of the weight in grams.
inline double efw_log10(double hc, double ac, double fl) {
    double e = 1.326;
    e -= 0.00326 * ac * fl;
    e += 0.0107 * hc;
    e += 0.0438 * ac;
    e += 0.158 * fl;
    return e;
}

namespace detail {

inline void require_positive(double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
        throw Error(ErrorCode::IncompleteBiometry, std::string(name) + " must be a positive length in cm");
    }
}

}  // namespace detail

inline GestAge estimate_ga(double hc, double bpd, double ac, double fl) {
    detail::require_positive(hc, "HC");
    detail::require_positive(bpd, "BPD");
    detail::require_positive(ac, "AC");
    detail::require_positive(fl, "FL");
    return {ga_polynomial(hc, bpd, ac, fl)};
}

inline FetalWeight estimate_efw(double hc, double ac, double fl) {
    detail::require_positive(hc, "HC");
    detail::require_positive(ac, "AC");
    detail::require_positive(fl, "FL");
    return {std::pow(10.0, efw_log10(hc, ac, fl))};
}

/// Fills GA and EFW iff all four measurements are present; clears them otherwise.
inline BiometrySet complete_or_skip(BiometrySet b) {
    b.ga_weeks.reset();
    b.efw_g.reset();
    if (!b.complete()) return b;
    b.ga_weeks = estimate_ga(*b.hc_cm, *b.bpd_cm, *b.ac_cm, *b.fl_cm).weeks;
    b.efw_g = estimate_efw(*b.hc_cm, *b.ac_cm, *b.fl_cm).grams;
    return b;
}

/// The dating polynomial returns implausibly early ages for mid-pregnancy
/// biometry; flag those without altering the value.
inline std::vector<std::string> estimation_warnings(const BiometrySet& b) {
    std::vector<std::string> out;
    if (b.ga_weeks && b.bpd_cm && *b.ga_weeks < 14.0 && *b.bpd_cm > 4.0) {
        out.emplace_back("estimated gestational age below 14 weeks for BPD above 4 cm; dating formula output is implausible");
    }
    return out;
}

}  // namespace fetometry
