#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace flowcam {

/// Entry point behind the `flowcam` binary. `args` excludes the program
/// name. Returns 0 on success, 2 for usage errors and 1 for data errors.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Deployment-style summary of predictions: class shares, a histogram of the
/// predicted-class probability and the share of flows at or above 0.9.
/// `truth` is optional; when given (same length) accuracy is appended.
std::string format_prediction_report(std::span<const std::string> predicted, std::span<const double> probability,
                                     const std::vector<std::string>& class_order = {},
                                     std::span<const std::string> truth = {});

/// Fraction of probabilities >= 0.9; 0 for an empty input.
double confident_fraction(std::span<const double> probability);

}  // namespace flowcam
