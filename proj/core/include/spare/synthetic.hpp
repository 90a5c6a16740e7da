#pragma once

#include <cstdint>
#include <string>

namespace spare {

/// Built-in dataset families:
///  - "relational-signal": binary classification; each child's label is its
///    parent's hidden 0/1 attribute with flip-noise, and the child's own
///    features are pure noise, so the signal is only reachable through the
///    foreign key.
///  - "sum-regression": child target = 1.0*a(p1) - 0.7*a(p2) + noise over
///    two distinct parent links.
///  - "skewed": sum-regression with Zipf-distributed parent popularity, so
///    hot parents repeat across many neighborhoods.
struct SyntheticSpec {
  std::string family = "relational-signal";
  int64_t parents = 500;
  int64_t targets = 5000;
  double flip_p = 0.05;  // relational-signal label noise
  double noise = 0.1;    // regression noise deviation
  double zipf_s = 1.1;   // skewed popularity exponent
};

/// Writes schema.json plus one CSV per table into out_dir; same spec and
/// seed always produce byte-identical files.
void gen_synthetic(const SyntheticSpec& spec, uint64_t seed, const std::string& out_dir);

/// Shortest decimal form that parses back to exactly the same double.
std::string format_double(double value);

}  // namespace spare
