#include "autoform/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <regex>
#include <sstream>

#include "autoform/jsonl.hpp"

namespace autoform {
namespace {

const char* kClassifyTemplate =
    "Classify the following math problem into exactly one category: algebra, "
    "number_theory, combinatorics, geometry, other.\n"
    "Respond with a single line in the format \"CATEGORY: <category>\" and nothing "
    "else.\n"
    "Problem: {problem}";

const char* kSplitTemplate =
    "Determine whether the following math problem contains multiple independent "
    "subgoals.\n"
    "If it states a single goal, respond with exactly \"SUBGOALS: 1\".\n"
    "If it contains multiple subgoals, respond with \"SUBGOALS: <n>\" on the first "
    "line, followed by one block per subgoal starting with \"SUBGOAL <i>:\" that "
    "restates the shared conditions together with that subgoal as a standalone "
    "problem.\n"
    "Problem: {problem}";

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

std::string substitute_problem(const char* tmpl, const std::string& statement) {
  std::string out = tmpl;
  std::size_t pos = out.find("{problem}");
  if (pos != std::string::npos) out.replace(pos, 9, statement);
  return out;
}

std::string ask_judge(Gateway& judge, const std::string& prompt, std::int64_t seed) {
  ChatRequest req = judge.new_request(Role::judge);
  req.messages.push_back({ChatMessage::Speaker::user, prompt});
  req.seed = seed;
  return judge.complete(req).text;
}

// "CATEGORY: <token>" anywhere in the completion, case-insensitive
std::optional<Category> parse_category_verdict(const std::string& completion) {
  std::istringstream in(completion);
  std::string line;
  while (std::getline(in, line)) {
    std::string low = lower(line);
    std::size_t pos = low.find("category:");
    if (pos == std::string::npos) continue;
    std::string token = trim(line.substr(pos + 9));
    std::string norm = lower(token);
    std::replace(norm.begin(), norm.end(), ' ', '_');
    std::replace(norm.begin(), norm.end(), '-', '_');
    // keep only the leading word
    std::size_t end = norm.find_first_not_of("abcdefghijklmnopqrstuvwxyz_");
    if (end != std::string::npos) norm = norm.substr(0, end);
    auto category = category_from_name(norm);
    if (category.has_value() && *category != Category::unknown) return category;
  }
  return std::nullopt;
}

struct ParsedSplit {
  int count = 0;
  std::vector<std::string> subgoals;
};

std::optional<ParsedSplit> parse_split_verdict(const std::string& completion) {
  std::string low = lower(completion);
  std::size_t pos = low.find("subgoals:");
  if (pos == std::string::npos) return std::nullopt;
  ParsedSplit parsed;
  {
    std::istringstream num(completion.substr(pos + 9));
    if (!(num >> parsed.count) || parsed.count < 1) return std::nullopt;
  }
  if (parsed.count == 1) return parsed;

  std::vector<std::size_t> marks;
  for (int i = 1; i <= parsed.count; ++i) {
    std::string marker = "subgoal " + std::to_string(i) + ":";
    std::size_t at = low.find(marker);
    if (at == std::string::npos) return std::nullopt;
    marks.push_back(at);
  }
  for (int i = 0; i < parsed.count; ++i) {
    std::size_t begin = completion.find(':', marks[static_cast<std::size_t>(i)]) + 1;
    std::size_t end = i + 1 < parsed.count ? marks[static_cast<std::size_t>(i) + 1]
                                           : completion.size();
    std::string text = trim(completion.substr(begin, end - begin));
    if (text.empty()) return std::nullopt;
    parsed.subgoals.push_back(std::move(text));
  }
  return parsed;
}

}  // namespace

const char* kDefaultNumberingPattern = "^Problem[ \\t]+[0-9]+\\.?";

std::string category_name(Category c) {
  switch (c) {
    case Category::algebra: return "algebra";
    case Category::number_theory: return "number_theory";
    case Category::combinatorics: return "combinatorics";
    case Category::geometry: return "geometry";
    case Category::other: return "other";
    case Category::unknown: return "unknown";
  }
  return "unknown";
}

std::optional<Category> category_from_name(const std::string& name) {
  if (name == "algebra") return Category::algebra;
  if (name == "number_theory") return Category::number_theory;
  if (name == "combinatorics") return Category::combinatorics;
  if (name == "geometry") return Category::geometry;
  if (name == "other") return Category::other;
  if (name == "unknown") return Category::unknown;
  return std::nullopt;
}

json Problem::to_json() const {
  json j = {{"id", id},
            {"source_id", source_id},
            {"statement", statement},
            {"category", category_name(category)}};
  if (parent_id.has_value()) j["parent_id"] = *parent_id;
  if (subgoal_index.has_value()) j["subgoal_index"] = *subgoal_index;
  return j;
}

Problem Problem::from_json(const json& j) {
  Problem p;
  p.id = j.at("id").get<std::string>();
  p.source_id = j.value("source_id", "");
  p.statement = j.at("statement").get<std::string>();
  p.category = category_from_name(j.value("category", "unknown")).value_or(Category::unknown);
  if (j.contains("parent_id") && j["parent_id"].is_string()) {
    p.parent_id = j["parent_id"].get<std::string>();
  }
  if (j.contains("subgoal_index") && j["subgoal_index"].is_number()) {
    p.subgoal_index = j["subgoal_index"].get<int>();
  }
  return p;
}

std::vector<Problem> extract_problems(const RawDocument& doc,
                                      const std::string& numbering_pattern) {
  std::regex pattern;
  try {
    pattern = std::regex(numbering_pattern,
                         std::regex_constants::ECMAScript | std::regex_constants::multiline);
  } catch (const std::regex_error& e) {
    throw PatternInvalid(std::string("invalid numbering pattern: ") + e.what());
  }

  struct HeaderMatch {
    std::size_t begin;
    std::size_t end;
  };
  std::vector<HeaderMatch> headers;
  auto begin_it = std::sregex_iterator(doc.body.begin(), doc.body.end(), pattern);
  for (auto it = begin_it; it != std::sregex_iterator(); ++it) {
    headers.push_back({static_cast<std::size_t>(it->position()),
                       static_cast<std::size_t>(it->position() + it->length())});
  }

  std::vector<Problem> problems;
  for (std::size_t i = 0; i < headers.size(); ++i) {
    std::size_t text_begin = headers[i].end;
    std::size_t text_end = i + 1 < headers.size() ? headers[i + 1].begin : doc.body.size();
    std::string statement = trim(doc.body.substr(text_begin, text_end - text_begin));
    if (statement.empty()) continue;
    Problem p;
    p.id = doc.source_id + "_" + std::to_string(problems.size() + 1);
    p.source_id = doc.source_id;
    p.statement = std::move(statement);
    p.category = Category::unknown;
    problems.push_back(std::move(p));
  }
  return problems;
}

JudgeDecision classify_problem(const Problem& p, Gateway& judge) {
  std::string prompt = substitute_problem(kClassifyTemplate, p.statement);
  JudgeDecision decision;
  for (int attempt = 0; attempt < 2; ++attempt) {
    std::string completion = ask_judge(judge, prompt, attempt);
    auto category = parse_category_verdict(completion);
    if (category.has_value()) {
      decision.category = *category;
      decision.drop = *category == Category::geometry;
      return decision;
    }
  }
  decision.category = Category::unknown;
  decision.drop = false;
  decision.review_flagged = true;
  return decision;
}

std::vector<Problem> split_subproblems(const Problem& p, Gateway& judge,
                                       bool* review_flagged) {
  if (p.parent_id.has_value()) {
    throw Error("split_subproblems on already-split problem: " + p.id);
  }
  if (review_flagged != nullptr) *review_flagged = false;

  std::string prompt = substitute_problem(kSplitTemplate, p.statement);
  for (int attempt = 0; attempt < 2; ++attempt) {
    std::string completion = ask_judge(judge, prompt, attempt);
    auto parsed = parse_split_verdict(completion);
    if (!parsed.has_value()) continue;
    if (parsed->count == 1) return {p};
    std::vector<Problem> children;
    for (int i = 0; i < parsed->count; ++i) {
      Problem child;
      child.id = p.id + "_s" + std::to_string(i + 1);
      child.source_id = p.source_id;
      child.statement = parsed->subgoals[static_cast<std::size_t>(i)];
      child.category = p.category;
      child.parent_id = p.id;
      child.subgoal_index = i + 1;
      children.push_back(std::move(child));
    }
    return children;
  }

  if (review_flagged != nullptr) *review_flagged = true;
  return {p};
}

PreprocessResult preprocess_corpus(const std::vector<Problem>& problems, Gateway& judge) {
  PreprocessResult result;
  result.report.total_in = static_cast<std::int64_t>(problems.size());

  std::vector<Problem> kept_after_filter;
  for (const Problem& p : problems) {
    JudgeDecision decision = classify_problem(p, judge);
    Problem classified = p;
    classified.category = decision.category;
    if (decision.review_flagged) result.review_flagged.push_back(p.id);
    if (decision.drop) {
      ++result.report.geometry_dropped;
      result.dropped.push_back(std::move(classified));
    } else {
      kept_after_filter.push_back(std::move(classified));
    }
  }

  for (const Problem& p : kept_after_filter) {
    if (p.parent_id.has_value()) {
      result.kept.push_back(p);
      continue;
    }
    bool flagged = false;
    std::vector<Problem> pieces = split_subproblems(p, judge, &flagged);
    if (flagged) result.review_flagged.push_back(p.id);
    if (pieces.size() > 1) ++result.report.split_parents;
    for (auto& piece : pieces) result.kept.push_back(std::move(piece));
  }

  result.report.total_out = static_cast<std::int64_t>(result.kept.size());
  return result;
}

std::vector<Problem> problems_from_jsonl(const std::string& text) {
  std::vector<Problem> problems;
  for (const json& line : parse_jsonl(text)) {
    problems.push_back(Problem::from_json(line));
  }
  return problems;
}

std::string problems_to_jsonl(const std::vector<Problem>& problems) {
  std::string out;
  for (const Problem& p : problems) {
    out += p.to_json().dump();
    out += "\n";
  }
  return out;
}

}  // namespace autoform
