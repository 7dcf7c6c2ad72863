#include "kforge/rng.hpp"

#include "kforge/math.hpp"

namespace kforge {

double Rng::normal() { return norm_cdf_inv(uniform()); }

}  // namespace kforge
