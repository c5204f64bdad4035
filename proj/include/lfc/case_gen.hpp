#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lfc/power_net.hpp"

namespace lfc {

struct CaseTemplateParams {
  int areas = 5;
  int buses_per_area = 4;
  std::uint64_t seed = 1;
};

std::vector<std::string> case_templates();

/// Synthetic multi-area grid: each area is a ring of buses with one
/// secondary-control (AGC) unit and one governor unit; areas form a ring of
/// tie-lines with one chord; area 0 is a load centre fed by an HVDC infeed
/// and a second infeed sits in area 2. Tie-line and flowgate limits are set
/// from the base-case flows. Throws std::invalid_argument for an unknown
/// template name or degenerate sizes.
NetworkCase generate_case(const std::string& template_name, const CaseTemplateParams& params);

}  // namespace lfc
