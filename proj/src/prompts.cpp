#include "autoform/prompts.hpp"

#include <algorithm>
#include <array>
#include <cctype>

#include <json.hpp>

#include "autoform/jsonl.hpp"

namespace autoform {
namespace {

using nlohmann::json;

const char* kTranslationTemplate =
    "A math theorem in natural language will be provided and please translate it into a "
    "Lean4 theorem. Please only return the translation (Lean4 code) and no analysis, no "
    "mathlib4 import, no comments, no proof, no reasoning. Use \":= by sorry\" as a "
    "placeholder for proof. Here are some examples for it: {few_shot}. Following the "
    "examples above, translate the next problem into Lean4: {problem}";

const char* kTranslationZeroShotTemplate =
    "A math theorem in natural language will be provided and please translate it into a "
    "Lean4 theorem. Please only return the translation (Lean4 code) and no analysis, no "
    "mathlib4 import, no comments, no proof, no reasoning. Use \":= by sorry\" as a "
    "placeholder for proof. Translate the next problem into Lean4: {problem}";

const char* kFeedbackTemplate =
    "A math theorem in natural language will be provided and please translate it into a "
    "Lean4 theorem. Please only return the translation (Lean4 code) and no analysis, no "
    "mathlib4 import, no comments, no proof, no reasoning. Use \":= by sorry\" as a "
    "placeholder for proof. Here is the theorem in natural language: {problem}. Before "
    "your translation, note that this problem has been mistranslated as the following. "
    "Concrete errors have been listed and please avoid similar mistakes when translating "
    "it again. Mistranslation: {failed_info}";

const char* kBacktranslationTemplate =
    "Convert the formal statement into natural language:\n"
    "```lean\n"
    "{prompt}\n"
    "```\n"
    "Please only return the translation and no analysis.";

const char* kConsistencyTemplate =
    "Please check whether the following two math problems is same or different in their "
    "mathematical essence:\n"
    "Problem 1: {origin}\n"
    "Problem 2: {back}\n"
    "Please consider each statement in two problems, they are different if any condition "
    "or any goal is different. Return in the following format:\n"
    "'''{\"Same\": true/false, \"Analysis\": \"Summarize their consistency and difference "
    "in brief\"}'''";

const char* kRatingTemplate =
    "To evaluate whether a formal Lean4 statement will be of interest to the community:\n"
    "```lean\n"
    "{prompt}\n"
    "```\n"
    "\n"
    "Please consider the following criteria:\n"
    "\n"
    "1. Relevance to Current Research: Does the statement address a problem or concept "
    "that is actively being researched in mathematics or related fields? Higher relevance "
    "scores indicate greater potential interest.\n"
    "\n"
    "2. Complexity and Depth: Is the statement complex enough to challenge existing "
    "theories and methodologies, yet deep enough to provide significant insights or "
    "advancements? Complexity and depth showcase Lean4's capabilities and attract "
    "interest.\n"
    "\n"
    "3. Interdisciplinary Potential: Does the statement offer opportunities for "
    "interdisciplinary research, connecting mathematics with other fields such as "
    "computer science, physics, or biology? Interdisciplinary projects often garner wide "
    "interest.\n"
    "\n"
    "4. Community Needs and Gaps: Does the statement fill an identified need or gap "
    "within the Lean4 community or the broader mathematical community? Addressing these "
    "needs directly correlates with interest.\n"
    "\n"
    "5. Innovativeness: How innovative is the statement? Does it propose new methods, "
    "concepts, or applications? Innovation drives interest and engagement.\n"
    "\n"
    "Customize your evaluation for each problem accordingly, assessing it as 'excellent', "
    "'good', 'above average', 'fair' or 'poor'.\n"
    "\n"
    "You should respond in the following JSON format for each statement:\n"
    "\n"
    "{\"Analysis\": (Provide a brief justification for each score, highlighting why the "
    "statement scored as it did across the criteria. Rate the statement as 'excellent', "
    "'good', 'above average', 'fair' or 'poor' for all aspects respectively. Format "
    "{\"Relevance to Current Research\": {\"rating\": (rating), \"reason\": (reason)}, "
    "\"Complexity and Depth\": {\"rating\": (rating), \"reason\": (reason)}, ...}), "
    "\"Assessment\": (Based on the criteria, rate the statement as 'excellent', 'good', "
    "'above average', 'fair' or 'poor'.)}";

constexpr std::array<const char*, 5> kDimensionKeys = {
    "Relevance to Current Research",
    "Complexity and Depth",
    "Interdisciplinary Potential",
    "Community Needs and Gaps",
    "Innovativeness",
};

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

// lowercases, maps '_' to ' ', collapses whitespace runs, trims
std::string normalize_word(const std::string& s) {
  std::string out;
  bool pending_space = false;
  for (unsigned char c : s) {
    char ch = static_cast<char>(std::tolower(c));
    if (ch == '_' || ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r') {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(ch);
  }
  return out;
}

bool is_ident_byte(unsigned char c) {
  return std::isalnum(c) || c == '_' || c == '\'' || c >= 0x80;
}

// first fenced code block (``` or ```lang); nullopt when absent; when the
// closing fence is missing, the rest of the text counts as the block
std::optional<std::string> first_fenced_block(const std::string& text) {
  std::size_t open = text.find("```");
  if (open == std::string::npos) return std::nullopt;
  std::size_t content = text.find('\n', open);
  if (content == std::string::npos) return std::string();
  ++content;
  std::size_t close = text.find("```", content);
  if (close == std::string::npos) return text.substr(content);
  return text.substr(content, close - content);
}

std::size_t find_decl_keyword(const std::string& text, bool line_start_only) {
  static constexpr std::array<const char*, 3> kws = {"theorem", "lemma", "example"};
  std::size_t best = std::string::npos;
  for (const char* kw : kws) {
    std::size_t len = std::char_traits<char>::length(kw);
    std::size_t pos = 0;
    while ((pos = text.find(kw, pos)) != std::string::npos) {
      bool left_ok = pos == 0 || !is_ident_byte(static_cast<unsigned char>(text[pos - 1]));
      bool right_ok = pos + len >= text.size() ||
                      !is_ident_byte(static_cast<unsigned char>(text[pos + len]));
      if (line_start_only && left_ok) {
        std::size_t bol = text.rfind('\n', pos);
        std::size_t from = bol == std::string::npos ? 0 : bol + 1;
        left_ok = text.find_first_not_of(" \t", from) == pos;
      }
      if (left_ok && right_ok) {
        best = std::min(best, pos);
        break;
      }
      pos += len;
    }
  }
  return best;
}

// matching '}' for the '{' at `open`, honoring JSON string literals
std::size_t find_matching_brace(const std::string& text, std::size_t open) {
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = open; i < text.size(); ++i) {
    char c = text[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) return i;
    }
  }
  return std::string::npos;
}

const json* find_key(const json& obj, const std::string& target) {
  if (!obj.is_object()) return nullptr;
  std::string want = normalize_word(target);
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (normalize_word(it.key()) == want) return &it.value();
  }
  return nullptr;
}

std::optional<Rating> rating_from_node(const json* node) {
  if (node == nullptr) return std::nullopt;
  if (node->is_string()) return parse_rating_word(node->get<std::string>());
  if (node->is_object()) {
    const json* r = find_key(*node, "rating");
    if (r != nullptr && r->is_string()) return parse_rating_word(r->get<std::string>());
  }
  return std::nullopt;
}

std::string topic_label(ExemplarTopic t) {
  return t == ExemplarTopic::algebra ? "algebra" : "number theory";
}

}  // namespace

std::string rating_label(Rating r) {
  switch (r) {
    case Rating::poor: return "poor";
    case Rating::fair: return "fair";
    case Rating::above_average: return "above average";
    case Rating::good: return "good";
    case Rating::excellent: return "excellent";
  }
  return "poor";
}

std::string rating_key(Rating r) {
  std::string label = rating_label(r);
  std::replace(label.begin(), label.end(), ' ', '_');
  return label;
}

std::optional<Rating> parse_rating_word(const std::string& word) {
  std::string w = normalize_word(word);
  if (w == "poor") return Rating::poor;
  if (w == "fair") return Rating::fair;
  if (w == "above average") return Rating::above_average;
  if (w == "good") return Rating::good;
  if (w == "excellent") return Rating::excellent;
  return std::nullopt;
}

PromptSet PromptSet::builtin() {
  PromptSet ps;
  ps.translation = kTranslationTemplate;
  ps.translation_zero_shot = kTranslationZeroShotTemplate;
  ps.feedback = kFeedbackTemplate;
  ps.backtranslation = kBacktranslationTemplate;
  ps.consistency = kConsistencyTemplate;
  ps.rating = kRatingTemplate;
  return ps;
}

PromptSet PromptSet::from_dir(const std::string& dir) {
  PromptSet ps;
  ps.translation = read_file(dir + "/translation.txt");
  ps.translation_zero_shot = read_file(dir + "/translation_zero_shot.txt");
  ps.feedback = read_file(dir + "/feedback.txt");
  ps.backtranslation = read_file(dir + "/backtranslation.txt");
  ps.consistency = read_file(dir + "/consistency.txt");
  ps.rating = read_file(dir + "/rating.txt");
  return ps;
}

const PromptSet& builtin_prompts() {
  static const PromptSet ps = PromptSet::builtin();
  return ps;
}

const std::vector<FewShotExemplar>& default_exemplars() {
  static const std::vector<FewShotExemplar> exemplars = {
      {"Prove that for all real numbers x and y, x^2 + y^2 ≥ 2*x*y.",
       "theorem test (x y : ℝ) : x^2 + y^2 ≥ 2*x*y := by sorry",
       ExemplarTopic::algebra},
      {"Prove that for every natural number n, 2 divides n^2 + n.",
       "theorem test (n : ℕ) : 2 ∣ n^2 + n := by sorry",
       ExemplarTopic::number_theory},
  };
  return exemplars;
}

std::string substitute_placeholders(
    const std::string& tmpl,
    const std::vector<std::pair<std::string, std::string>>& values) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      bool matched = false;
      for (const auto& [name, value] : values) {
        std::string key = "{" + name + "}";
        if (tmpl.compare(i, key.size(), key) == 0) {
          out += value;
          i += key.size();
          matched = true;
          break;
        }
      }
      if (matched) continue;
    }
    out.push_back(tmpl[i]);
    ++i;
  }
  return out;
}

std::string render_few_shot_block(const std::vector<FewShotExemplar>& exemplars) {
  std::string out;
  for (std::size_t i = 0; i < exemplars.size(); ++i) {
    if (i > 0) out += "\n\n";
    out += "Example " + std::to_string(i + 1) + " (" + topic_label(exemplars[i].topic) +
           "):\nNatural language: " + exemplars[i].nl_statement +
           "\nLean4: " + exemplars[i].lean_statement;
  }
  return out;
}

std::string build_translation_prompt(const std::string& problem_statement,
                                     const std::vector<FewShotExemplar>& exemplars,
                                     bool few_shot, const PromptSet& prompts) {
  if (!few_shot) {
    return substitute_placeholders(prompts.translation_zero_shot,
                                   {{"problem", problem_statement}});
  }
  if (exemplars.size() != 2) {
    throw Error("few-shot translation requires exactly 2 exemplars");
  }
  bool has_algebra = exemplars[0].topic == ExemplarTopic::algebra ||
                     exemplars[1].topic == ExemplarTopic::algebra;
  bool has_nt = exemplars[0].topic == ExemplarTopic::number_theory ||
                exemplars[1].topic == ExemplarTopic::number_theory;
  if (!has_algebra || !has_nt) {
    throw Error("few-shot exemplars must cover algebra and number theory");
  }
  return substitute_placeholders(
      prompts.translation,
      {{"few_shot", render_few_shot_block(exemplars)}, {"problem", problem_statement}});
}

std::string build_feedback_prompt(const std::string& problem_statement,
                                  const FailureContext& fail, const PromptSet& prompts) {
  if (fail.error_text.empty()) throw Error("feedback requires non-empty error text");
  std::string failed_info = fail.failed_lean + "\nErrors:\n" + fail.error_text;
  return substitute_placeholders(
      prompts.feedback, {{"problem", problem_statement}, {"failed_info", failed_info}});
}

std::string build_backtranslation_prompt(const std::string& lean, const PromptSet& prompts) {
  return substitute_placeholders(prompts.backtranslation, {{"prompt", lean}});
}

std::string build_consistency_prompt(const std::string& origin, const std::string& back,
                                     const PromptSet& prompts) {
  return substitute_placeholders(prompts.consistency,
                                 {{"origin", origin}, {"back", back}});
}

std::string build_rating_prompt(const std::string& lean, const PromptSet& prompts) {
  return substitute_placeholders(prompts.rating, {{"prompt", lean}});
}

std::string extract_lean_code(const std::string& completion) {
  std::string text = first_fenced_block(completion).value_or(completion);
  text = trim(text);

  // drop leading import lines; the verifier prepends the canonical header
  for (;;) {
    if (text.compare(0, 7, "import ") == 0) {
      std::size_t nl = text.find('\n');
      if (nl == std::string::npos) {
        text.clear();
        break;
      }
      text = trim(text.substr(nl + 1));
      continue;
    }
    break;
  }

  std::size_t start = find_decl_keyword(text, /*line_start_only=*/true);
  if (start == std::string::npos) start = find_decl_keyword(text, false);
  if (start == std::string::npos) {
    throw NoTheoremFound("no theorem, lemma, or example declaration in completion");
  }
  text = text.substr(start);

  // keep only the first declaration when the model returned several
  std::size_t first_nl = text.find('\n');
  if (first_nl != std::string::npos) {
    std::size_t next = find_decl_keyword(text.substr(first_nl + 1),
                                         /*line_start_only=*/true);
    if (next != std::string::npos) {
      text = trim(text.substr(0, first_nl + 1 + next));
    }
  }

  text = trim(text);
  if (text.find(":=") == std::string::npos) {
    text += " := by sorry";
  }
  return text;
}

ConsistencyVerdict parse_consistency_verdict(const std::string& completion) {
  std::size_t pos = 0;
  while ((pos = completion.find('{', pos)) != std::string::npos) {
    std::size_t end = find_matching_brace(completion, pos);
    if (end == std::string::npos) {
      ++pos;
      continue;
    }
    json obj = json::parse(completion.substr(pos, end - pos + 1), nullptr, false);
    if (!obj.is_discarded() && obj.is_object()) {
      const json* same_node = find_key(obj, "Same");
      if (same_node != nullptr) {
        std::optional<bool> same;
        if (same_node->is_boolean()) {
          same = same_node->get<bool>();
        } else if (same_node->is_string()) {
          std::string v = lower(trim(same_node->get<std::string>()));
          if (v == "true") same = true;
          if (v == "false") same = false;
        }
        if (same.has_value()) {
          ConsistencyVerdict verdict;
          verdict.same = *same;
          const json* analysis = find_key(obj, "Analysis");
          if (analysis != nullptr && analysis->is_string()) {
            verdict.analysis = analysis->get<std::string>();
          }
          if (verdict.analysis.empty()) verdict.analysis = "(no analysis provided)";
          return verdict;
        }
      }
    }
    ++pos;
  }
  throw VerdictUnparseable("no object with a boolean \"Same\" key in completion");
}

std::string render_consistency_verdict(const ConsistencyVerdict& v) {
  return std::string("'''{\"Same\": ") + (v.same ? "true" : "false") +
         ", \"Analysis\": " + json(v.analysis).dump() + "}'''";
}

QualityAssessment parse_rating(const std::string& completion) {
  std::size_t pos = 0;
  while ((pos = completion.find('{', pos)) != std::string::npos) {
    std::size_t end = find_matching_brace(completion, pos);
    if (end == std::string::npos) {
      ++pos;
      continue;
    }
    json obj = json::parse(completion.substr(pos, end - pos + 1), nullptr, false);
    if (!obj.is_discarded() && obj.is_object()) {
      const json* analysis = find_key(obj, "Analysis");
      const json* assessment = find_key(obj, "Assessment");
      if (analysis != nullptr && assessment != nullptr && assessment->is_string()) {
        std::optional<Rating> overall = parse_rating_word(assessment->get<std::string>());
        std::array<std::optional<Rating>, 5> dims;
        for (std::size_t i = 0; i < kDimensionKeys.size(); ++i) {
          dims[i] = rating_from_node(find_key(*analysis, kDimensionKeys[i]));
        }
        bool complete = overall.has_value() &&
                        std::all_of(dims.begin(), dims.end(),
                                    [](const auto& d) { return d.has_value(); });
        if (complete) {
          QualityAssessment qa;
          qa.relevance = *dims[0];
          qa.complexity_depth = *dims[1];
          qa.interdisciplinary = *dims[2];
          qa.community_needs = *dims[3];
          qa.innovativeness = *dims[4];
          qa.overall = *overall;
          qa.analysis = analysis->dump();
          return qa;
        }
      }
    }
    ++pos;
  }
  throw RatingUnparseable("no complete rating object in completion");
}

std::string render_rating(const QualityAssessment& qa, const std::string& reason) {
  json analysis = json::object();
  const std::array<Rating, 5> values = {qa.relevance, qa.complexity_depth,
                                        qa.interdisciplinary, qa.community_needs,
                                        qa.innovativeness};
  for (std::size_t i = 0; i < kDimensionKeys.size(); ++i) {
    analysis[kDimensionKeys[i]] = {{"rating", rating_label(values[i])},
                                   {"reason", reason}};
  }
  json out = {{"Analysis", analysis}, {"Assessment", rating_label(qa.overall)}};
  return out.dump();
}

}  // namespace autoform
