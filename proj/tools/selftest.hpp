#pragma once

#include <iosfwd>

namespace unipc::tools {

// Cross-checks the basis functions against Simpson quadrature of their
// integral definitions, the coefficient systems against their residuals and
// the varying-coefficient inverse against C_p. Returns the failure count.
int run_selftest(std::ostream& out);

}  // namespace unipc::tools
