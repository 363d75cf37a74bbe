#include "rtr/diagnostics.hpp"

namespace rtr {

const double kSingularBoundsCalibratedC = 0.01;

} // namespace rtr
