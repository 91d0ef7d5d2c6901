#pragma once

// Named worked cases: kernel, constraint and model wired together.

#include <string>
#include <vector>

#include "ustat/constraint.hpp"
#include "ustat/error.hpp"
#include "ustat/kernel.hpp"
#include "ustat/model.hpp"
#include "ustat/spectral.hpp"

namespace ustat {

struct NamedExample {
  std::string name;
  Kernel f;
  Constraint constraint;
  SequenceModel model;
  std::string kernel_spec;  // JSON text of the kernel spec understood by the CLI
  std::string gaps;
  std::string model_spec;
};

/// 1{xyz = 101} - 1{xyz = 011}, which equals (x - y) z on {0, 1}.
inline Kernel e0_kernel() {
  return Kernel::linear({{1.0, Kernel::word("101", "01")}, {-1.0, Kernel::word("011", "01")}});
}

inline const std::vector<std::string>& example_names() {
  static const std::vector<std::string> names{"e0", "e21", "e4", "inversions", "word-101"};
  return names;
}

inline NamedExample named_example(const std::string& name) {
  const std::string binary = R"({"type":"uniform","A":2})";
  if (name == "e0")
    return {name, e0_kernel(), Constraint::parse("1,inf"), SequenceModel::uniform_finite(2),
            R"({"linear":[{"coef":1,"kernel":{"word":"101","alphabet":"01"}},{"coef":-1,"kernel":{"word":"011","alphabet":"01"}}]})",
            "1,inf", binary};
  if (name == "e21")
    return {name, e21_kernel(), Constraint::parse("inf"), SequenceModel::uniform_finite(2),
            R"({"table":{"alphabet":["0","1"],"arity":2,"values":[1,-1,-1,1]}})", "inf", binary};
  if (name == "e4")
    return {name, e4_kernel(), Constraint::parse("inf"), SequenceModel::uniform_finite(4),
            R"({"table":{"alphabet":["a","b","c","d"],"arity":2,"values":[0,0,1,-1,0,0,-1,1,0,0,0,0,0,0,0,0]}})",
            "inf", R"({"type":"uniform","A":4})"};
  if (name == "inversions")
    return {name, Kernel::perm_pattern({2, 1}), Constraint::parse("inf"), SequenceModel::iid_uniform(),
            R"({"perm":"21"})", "inf", R"({"type":"uniform01"})"};
  if (name == "word-101")
    return {name, Kernel::word("101", "01"), Constraint::parse("1,inf"), SequenceModel::uniform_finite(2),
            R"({"word":"101","alphabet":"01"})", "1,inf", binary};
  throw ValidationError("unknown example '" + name + "'");
}

}  // namespace ustat
