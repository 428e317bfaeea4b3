#pragma once

// Textual model language.
//
//   model   := (decl ";")* (assign ";")+
//   decl    := "input" NAME "/" INT ["numeric" [range] ["learnable"]]
//            | "prob" NAME "/" INT
//            | "param" NAME [range]
//   range   := "[" bound "," bound "]"        bound := NUMBER | "-inf" | "inf"
//   assign  := NAME "(" vars ")" ["WHERE" guard] "<-" formula
//   formula := term (("+" | "-") term)*
//   term    := factor ("*" factor)*
//   factor  := NUMBER | "-" factor | NAME | NAME "(" vars ")" | "(" formula ")" | wif | combine
//   wif     := "WIF" formula "THEN" formula "ELSE" formula
//   combine := "COMBINE" formula ("," formula)* "WITH" combfn ["FORALL" vars ["WHERE" guard]]
//   combfn  := "sum" | "l-reg" | "mean" | "noisy-or"
//   guard   := gatom ("&" gatom)*
//   gatom   := ["!"] NAME ["(" vars ")"] | var "=" var | var "!=" var
//
// Keywords are case-insensitive; `//` starts a comment running to end of line.
// A bare NAME in a formula resolves to a parameter or a 0-ary relation.

#include <filesystem>
#include <string_view>

#include "rbn/formula.hpp"

namespace rbn {

// Throws SyntaxError (with line/column) or ModelError.
Model parse_model(std::string_view text);

Model load_model(const std::filesystem::path& path);

// Parses a single formula against the declarations of `scope`; used for
// interactive checks and tests. Free variables are not checked.
FormulaPtr parse_formula(std::string_view text, const Model& scope);

}  // namespace rbn
