#pragma once

#include <activereg/scenario.hpp>

#include <string>

namespace activereg::testing {

/// A small simulated scenario: n = 64, one four-dimensional trigonometric
/// model with a little bias, two schemes.
inline std::string small_config(double sigma2 = 0.25, const std::string& extra = {}) {
    return "seed = 99\n"
           "[design]\nn = 64\nfamily = trigonometric\n"
           "[truth]\ncoefficients = 1:0.4, 2:0.9, 3:-0.5, 4:0.3, 7:0.2\n"
           "[noise]\nsigma2 = " +
           format_double(sigma2) +
           "\n"
           "[models]\nm1 = 1-4\nm2 = 1-2\n"
           "[schemes]\nk1 = constant(0.5)\nk2 = proportional(0.3)\n"
           "[penalty]\ndelta = 0.1\ngamma = 0.2\n"
           "[iterative]\nn0 = 16\nT = 24\n"
           "[validation]\nreplications = 200\naux_draws = 50\n" +
           extra;
}

inline BuiltScenario small_scenario(double sigma2 = 0.25) {
    return build_scenario(parse_config(small_config(sigma2)));
}

}  // namespace activereg::testing
