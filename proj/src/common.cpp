#include "textcaus/common.hpp"

#include <cmath>

namespace textcaus {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_two_sided_p(double z) {
  double p = std::erfc(std::abs(z) / std::sqrt(2.0));
  return p > 1.0 ? 1.0 : p;
}

}  // namespace textcaus
