#pragma once

#include <ostream>
#include <sstream>
#include <string>

// Acceptance gate: one function per release criterion. Each function writes
// indented evidence lines to `log` and returns the overall verdict; the
// dispatcher in acceptance_main.cpp prints one PASS/FAIL line per criterion.

namespace acceptance {

bool criterion_1(std::ostream& log);   // pmf normalization + geometric closed form
bool criterion_2(std::ostream& log);   // analytic gradients vs central differences
bool criterion_3(std::ostream& log);   // sampler validation on analytic targets
bool criterion_4(std::ostream& log);   // generator + oracle tail behavior
bool criterion_5(std::ostream& log);   // two-step selection recovery, full draws
bool criterion_5s(std::ostream& log);  // reduced-draw selection smoke
bool criterion_6(std::ostream& log);   // fitted two-step tail calibration
bool criterion_7(std::ostream& log);   // geodesic + circular-statistics identities
bool criterion_8(std::ostream& log);   // aggregation vs brute-force recount
bool criterion_9(std::ostream& log);   // byte-identical subcommand reruns

// Collects named sub-checks; every call prints an [ ok ]/[FAIL] evidence line.
class Gate {
 public:
  explicit Gate(std::ostream& log) : log_(log) {}

  bool check(bool cond, const std::string& what) {
    log_ << "  [" << (cond ? " ok " : "FAIL") << "] " << what << "\n";
    ok_ = ok_ && cond;
    return cond;
  }

  void note(const std::string& what) { log_ << "         " << what << "\n"; }

  bool ok() const { return ok_; }

 private:
  std::ostream& log_;
  bool ok_ = true;
};

// Compact numeric formatting for evidence lines.
inline std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << v;
  return s.str();
}

}  // namespace acceptance
