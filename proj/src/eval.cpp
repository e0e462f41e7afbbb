#include "chartmark/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <regex>
#include <set>
#include <sstream>

#include "chartmark/error.hpp"
#include "chartmark/util.hpp"

namespace chartmark {

using nlohmann::json;

namespace {

// Slack on the relative-error comparison so that values such as 0.05 exactly
// on the margin are not lost to binary rounding.
constexpr double kMarginSlack = 1e-9;

// Content of the last \box{...} or \boxed{...}, honoring nested braces.
std::optional<std::string> last_box(std::string_view raw) {
  std::optional<std::string> found;
  for (std::size_t pos = raw.find("\\box"); pos != std::string_view::npos; pos = raw.find("\\box", pos + 1)) {
    std::size_t open = pos + 4;
    if (raw.substr(open, 3) == "ed{") open += 2;
    if (open >= raw.size() || raw[open] != '{') continue;
    int depth = 0;
    for (std::size_t i = open; i < raw.size(); ++i) {
      if (raw[i] == '{') {
        ++depth;
      } else if (raw[i] == '}' && --depth == 0) {
        found = std::string(raw.substr(open + 1, i - open - 1));
        break;
      }
    }
  }
  return found;
}

std::optional<std::string> last_numeric_token(std::string_view raw) {
  static const std::regex token(R"([-+]?(\d{1,3}(,\d{3})+(\.\d+)?|\d+(\.\d+)?|\.\d+)\s*%?)");
  std::optional<std::string> last;
  const std::string s(raw);
  for (auto it = std::sregex_iterator(s.begin(), s.end(), token); it != std::sregex_iterator(); ++it) {
    last = it->str();
  }
  return last;
}

}  // namespace

std::string_view to_string(ExtractMode m) { return m == ExtractMode::direct ? "direct" : "match"; }

ExtractMode extract_mode_from_string(std::string_view s) {
  if (s == "direct") return ExtractMode::direct;
  if (s == "match") return ExtractMode::match;
  throw ValidationError("extraction mode must be direct or match");
}

Answer extract_answer(std::string_view raw, ExtractMode mode) {
  std::string candidate;
  if (mode == ExtractMode::direct) {
    candidate = trim(raw);
  } else if (auto boxed = last_box(raw)) {
    candidate = trim(*boxed);
  } else if (auto token = last_numeric_token(raw)) {
    candidate = *token;
  }
  if (candidate.empty()) throw ExtractionError("no answer candidate in reply");
  return parse_answer_text(candidate);
}

std::string normalize_text_answer(std::string_view s, bool lenient) {
  std::string t = to_lower(trim(s));
  if (!lenient) return t;
  while (!t.empty() && t.back() == '.') t.pop_back();
  std::istringstream words(t);
  std::string word, out;
  while (words >> word) {
    if (word == "the") continue;
    if (!out.empty()) out += ' ';
    out += word;
  }
  return out;
}

MatchOutcome compare_answers(const Answer& pred, const Answer& gt, double margin, const MatchOptions& opts) {
  if (!(margin >= 0)) throw ValidationError("margin must be non-negative");
  if (pred.is_numeric() != gt.is_numeric()) return MatchOutcome::type_mismatch;
  bool ok;
  if (gt.is_numeric()) {
    const double g = gt.number(), p = pred.number();
    ok = g == 0.0 ? p == 0.0 : std::fabs(p - g) / std::fabs(g) <= margin + kMarginSlack;
  } else {
    ok = normalize_text_answer(pred.text(), opts.lenient_text) == normalize_text_answer(gt.text(), opts.lenient_text);
  }
  return ok ? MatchOutcome::correct : MatchOutcome::incorrect;
}

bool relaxed_match(const Answer& pred, const Answer& gt, double margin, const MatchOptions& opts) {
  return compare_answers(pred, gt, margin, opts) == MatchOutcome::correct;
}

namespace {

template <typename F>
void for_each_jsonl(std::string_view text, F&& f) {
  std::size_t line_no = 0, start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    const std::string line = trim(text.substr(start, end - start));
    start = end + 1;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw FormatError("line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!j.is_object()) throw FormatError("line " + std::to_string(line_no) + ": expected an object");
    try {
      f(j);
    } catch (const json::exception& e) {
      throw FormatError("line " + std::to_string(line_no) + ": " + e.what());
    } catch (const FormatError& e) {
      throw FormatError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

std::optional<std::string> optional_label(const json& j, const std::string& key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (it->is_string()) return it->get<std::string>();
  return it->dump();
}

std::string sample_id_of(const json& j) {
  const auto& id = j.at("sample_id");
  return id.is_string() ? id.get<std::string>() : id.dump();
}

}  // namespace

std::vector<GoldEntry> parse_gold_jsonl(std::string_view text, const std::string& group_key) {
  std::vector<GoldEntry> out;
  std::set<std::string> seen;
  for_each_jsonl(text, [&](const json& j) {
    GoldEntry g{sample_id_of(j), answer_from_json(j.at("answer")), optional_label(j, group_key)};
    if (!seen.insert(g.sample_id).second) throw FormatError("duplicate sample_id '" + g.sample_id + "'");
    out.push_back(std::move(g));
  });
  return out;
}

std::vector<Prediction> parse_predictions_jsonl(std::string_view text) {
  std::vector<Prediction> out;
  std::set<std::string> seen;
  for_each_jsonl(text, [&](const json& j) {
    Prediction p{sample_id_of(j), j.at("raw_text").get<std::string>(), optional_label(j, "group")};
    if (!seen.insert(p.sample_id).second) throw FormatError("duplicate sample_id '" + p.sample_id + "'");
    out.push_back(std::move(p));
  });
  return out;
}

namespace {

void finish(GroupResult& g) {
  g.accuracy.clear();
  for (auto c : g.correct) {
    g.accuracy.push_back(g.total == 0 ? 0.0 : static_cast<double>(c) / static_cast<double>(g.total));
  }
}

}  // namespace

EvalReport evaluate(const std::vector<Prediction>& predictions, const std::vector<GoldEntry>& gold,
                    const EvalOptions& options) {
  if (options.margins.empty()) throw ValidationError("at least one margin is required");
  for (double m : options.margins) {
    if (!(m >= 0)) throw ValidationError("margins must be non-negative");
  }
  std::map<std::string, const GoldEntry*> by_id;
  for (const auto& g : gold) by_id.emplace(g.sample_id, &g);
  std::map<std::string, const Prediction*> pred_by_id;
  for (const auto& p : predictions) {
    if (!by_id.contains(p.sample_id)) throw MissingGoldError("no gold entry for prediction '" + p.sample_id + "'");
    pred_by_id.emplace(p.sample_id, &p);
  }

  const std::size_t nm = options.margins.size();
  EvalReport r;
  r.margins = options.margins;
  r.all.correct.assign(nm, 0);
  for (const auto& [id, g] : by_id) {
    const auto pit = pred_by_id.find(id);
    const Prediction* p = pit == pred_by_id.end() ? nullptr : pit->second;
    const std::string group = g->group ? *g->group : (p && p->group ? *p->group : "all");
    auto& cell = r.groups[group];
    if (cell.correct.empty()) cell.correct.assign(nm, 0);
    ++cell.total;
    ++r.all.total;
    if (!p) {
      ++r.missing_predictions;
      continue;
    }
    Answer pred;
    try {
      pred = extract_answer(p->raw_text, options.mode);
    } catch (const ExtractionError&) {
      ++r.extraction_failures;
      continue;
    }
    for (std::size_t i = 0; i < nm; ++i) {
      const auto outcome = compare_answers(pred, g->answer, options.margins[i], options.match);
      if (outcome == MatchOutcome::type_mismatch) {
        ++r.type_mismatches;
        break;
      }
      if (outcome == MatchOutcome::correct) {
        ++cell.correct[i];
        ++r.all.correct[i];
      }
    }
  }
  finish(r.all);
  r.avg.assign(nm, 0.0);
  for (auto& [name, cell] : r.groups) {
    finish(cell);
    for (std::size_t i = 0; i < nm; ++i) r.avg[i] += cell.accuracy[i];
  }
  if (!r.groups.empty()) {
    for (auto& a : r.avg) a /= static_cast<double>(r.groups.size());
  }
  return r;
}

json to_json(const EvalReport& r) {
  const auto cell = [](const GroupResult& g) {
    return json{{"total", g.total}, {"correct", g.correct}, {"accuracy", g.accuracy}};
  };
  json groups = json::object();
  for (const auto& [name, g] : r.groups) groups[name] = cell(g);
  return {{"margins", r.margins},
          {"groups", groups},
          {"avg", r.avg},
          {"all", cell(r.all)},
          {"extraction_failures", r.extraction_failures},
          {"type_mismatches", r.type_mismatches},
          {"missing_predictions", r.missing_predictions}};
}

std::string format_table(const EvalReport& r) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header{"group", "n"};
  for (double m : r.margins) header.push_back("@" + format_fixed(m, 2));
  rows.push_back(header);
  const auto pct = [](double a) { return format_fixed(100.0 * a, 2); };
  for (const auto& [name, g] : r.groups) {
    std::vector<std::string> row{name, std::to_string(g.total)};
    for (double a : g.accuracy) row.push_back(pct(a));
    rows.push_back(std::move(row));
  }
  std::vector<std::string> avg{"Avg.", ""};
  for (double a : r.avg) avg.push_back(pct(a));
  rows.push_back(std::move(avg));
  std::vector<std::string> all{"ALL", std::to_string(r.all.total)};
  for (double a : r.all.accuracy) all.push_back(pct(a));
  rows.push_back(std::move(all));

  std::vector<std::size_t> widths(header.size(), 0);
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], row[c].size());
  }
  std::string out;
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      const std::string pad(widths[c] - row[c].size(), ' ');
      out += c == 0 ? row[c] + pad : "  " + pad + row[c];
    }
    out += '\n';
  }
  return out;
}

}  // namespace chartmark
