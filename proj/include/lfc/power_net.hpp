#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace lfc {

/// Raised for malformed case text (JSON syntax, missing or mistyped fields).
class CaseParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a parsed case violates a structural invariant.
class CaseValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when the DC power-flow system has no unique solution.
class SingularSystemError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when nodal injections do not sum to zero.
class ImbalanceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Bus {
  int id = 0;
  int area_id = 0;
};

struct Line {
  int id = 0;
  int from_bus = 0;
  int to_bus = 0;
  double x = 0.0;  // per-unit
  double r = 0.0;  // per-unit
  double limit = 0.0;  // MW
};

struct Generator {
  int id = 0;
  int bus = 0;
  double p = 0.0;
  double p_min = 0.0;
  double p_max = 0.0;
  double ramp_limit = 0.0;  // MW per control step
  double reserve = 0.0;
  std::array<double, 3> cost_coeffs{};  // a + b P + c P^2
  double governor_gain = 0.0;
};

struct Load {
  int id = 0;
  int bus = 0;
  double p = 0.0;
  bool sheddable = false;
  double shed_max = 0.0;
};

struct HvdcInfeed {
  int id = 0;
  int bus = 0;
  double p = 0.0;
  int poles = 2;
};

struct FlowgateMember {
  int line_id = 0;
  int direction = 1;  // +1 or -1
};

struct Flowgate {
  int id = 0;
  std::vector<FlowgateMember> members;
  double limit = 0.0;
};

struct Area {
  int id = 0;
  std::string name;
};

/// Which elements the overflow and cost signals range over.
enum class MonitorScope { kMonitored, kAllLines };

/// A group of lines whose signed flow sum is held against one limit.
/// Tie-lines and individual lines are represented as single-member elements.
struct MonitoredElement {
  std::string name;
  std::vector<FlowgateMember> members;
  double limit = 0.0;
};

/// Static grid description. Immutable once returned by load_case/validate.
struct NetworkCase {
  double base_mva = 100.0;
  std::vector<Bus> buses;
  std::vector<Line> lines;
  std::vector<Generator> generators;
  std::vector<Load> loads;
  std::vector<HvdcInfeed> hvdc_infeeds;
  std::vector<Flowgate> flowgates;
  std::vector<Area> areas;
  double beta = 0.0;  // MW/Hz

  // Derived by finalize(); positions in the vectors above.
  std::unordered_map<int, std::size_t> bus_index;
  std::unordered_map<int, std::size_t> line_index;
  std::size_t reference_bus = 0;

  std::size_t sheddable_count() const;
  std::vector<std::size_t> sheddable_loads() const;
  bool is_tie_line(const Line& line) const;
  std::vector<std::size_t> tie_lines() const;
};

/// Builds the index maps and checks every structural invariant.
/// Throws CaseValidationError naming the violated invariant.
void finalize(NetworkCase& net_case);

NetworkCase load_case(std::string_view text);
NetworkCase load_case_file(const std::string& path);
std::string dump_case(const NetworkCase& net_case);

struct FlowSolution {
  std::vector<double> theta;       // radians, reference bus at 0
  std::vector<double> line_flows;  // MW, signed from -> to
  std::vector<double> losses;      // MW per line
  double total_loss = 0.0;
};

/// Factorised reduced susceptance system for one case. Reusable across
/// any number of injection vectors.
class DcFlowModel {
 public:
  explicit DcFlowModel(const NetworkCase& net_case);

  FlowSolution solve(std::span<const double> injections_mw) const;
  std::size_t bus_count() const { return reduced_pos_.size(); }

 private:
  double base_mva_ = 100.0;
  std::vector<std::size_t> line_from_;
  std::vector<std::size_t> line_to_;
  std::vector<double> line_x_;
  std::vector<double> line_r_;
  std::size_t reduced_ = 0;
  std::vector<std::size_t> reduced_pos_;  // bus -> row, npos for reference
  std::vector<double> chol_;              // lower Cholesky factor, row-major
};

FlowSolution dc_power_flow(const NetworkCase& net_case,
                           std::span<const double> injections_mw);

double flowgate_flow(const FlowSolution& solution, const NetworkCase& net_case,
                     const Flowgate& gate);
double element_flow(const FlowSolution& solution, const NetworkCase& net_case,
                    const MonitoredElement& element);

std::vector<MonitoredElement> monitored_elements(
    const NetworkCase& net_case, MonitorScope scope = MonitorScope::kMonitored);

struct OverflowStats {
  int count = 0;
  double d_overflow = 0.0;  // MW^2
};

OverflowStats overflow_stats(const FlowSolution& solution,
                             const NetworkCase& net_case,
                             MonitorScope scope = MonitorScope::kMonitored);
OverflowStats overflow_stats(std::span<const double> element_flows,
                             std::span<const double> limits);

double production_cost(const NetworkCase& net_case,
                       std::span<const double> outputs_mw);

}  // namespace lfc
