#pragma once

#include <algorithm>
#include <iomanip>
#include <istream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gti/data.hpp"
#include "gti/errors.hpp"

namespace gti {

// Spans of an IOBES sequence with conlleval-style leniency: a run that
// breaks the scheme is closed at the last consistent position, and a
// continuation with no live span opens one. Deterministic.
inline std::vector<TagSpan> spans_from_iobes(const std::vector<std::string>& tags) {
  std::vector<TagSpan> spans;
  bool open = false;
  TagSpan cur;
  auto close = [&](std::size_t end) {
    if (open) {
      cur.end = end;
      spans.push_back(cur);
      open = false;
    }
  };
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const std::string& tag = tags[i];
    if (tag == "O") {
      close(i - 1);
      continue;
    }
    if (tag.size() < 3 || tag[1] != '-' ||
        (tag[0] != 'B' && tag[0] != 'I' && tag[0] != 'E' && tag[0] != 'S'))
      throw ParseError("not an IOBES tag: '" + tag + "' at position " +
                       std::to_string(i));
    char p = tag[0];
    std::string type = tag.substr(2);
    switch (p) {
      case 'S':
        close(i - 1);
        spans.push_back(TagSpan{type, i, i});
        break;
      case 'B':
        close(i - 1);
        cur = TagSpan{type, i, i};
        open = true;
        break;
      case 'I':
        if (open && cur.type == type) break;
        close(i - 1);
        cur = TagSpan{type, i, i};
        open = true;
        break;
      case 'E':
        if (open && cur.type == type) {
          cur.end = i;
          spans.push_back(cur);
          open = false;
        } else {
          close(i - 1);
          spans.push_back(TagSpan{type, i, i});
        }
        break;
    }
  }
  close(tags.empty() ? 0 : tags.size() - 1);
  return spans;
}

struct TypeScore {
  std::size_t gold = 0;
  std::size_t pred = 0;
  std::size_t correct = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct EvalReport {
  std::size_t gold = 0;
  std::size_t pred = 0;
  std::size_t correct = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::map<std::string, TypeScore> per_type;
};

namespace detail {
inline void finish_score(TypeScore& s) {
  s.precision = s.pred ? static_cast<double>(s.correct) / static_cast<double>(s.pred) : 0.0;
  s.recall = s.gold ? static_cast<double>(s.correct) / static_cast<double>(s.gold) : 0.0;
  s.f1 = (s.precision + s.recall) > 0.0
             ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
             : 0.0;
}
}  // namespace detail

// Micro-averaged span F1: exact type+boundary matches over pooled
// counts. Empty denominators score 0, never NaN.
inline EvalReport micro_f1(const std::vector<std::vector<std::string>>& gold,
                           const std::vector<std::vector<std::string>>& pred) {
  if (gold.size() != pred.size())
    throw ArgumentError("micro_f1: " + std::to_string(gold.size()) + " gold vs " +
                        std::to_string(pred.size()) + " predicted sentences");
  EvalReport r;
  for (std::size_t s = 0; s < gold.size(); ++s) {
    if (gold[s].size() != pred[s].size())
      throw ArgumentError("micro_f1: sentence " + std::to_string(s) +
                          " length mismatch");
    std::vector<TagSpan> g = spans_from_iobes(gold[s]);
    std::vector<TagSpan> p = spans_from_iobes(pred[s]);
    std::set<TagSpan> gset(g.begin(), g.end());
    for (const TagSpan& sp : g) {
      ++r.gold;
      ++r.per_type[sp.type].gold;
    }
    for (const TagSpan& sp : p) {
      ++r.pred;
      ++r.per_type[sp.type].pred;
      if (gset.count(sp)) {
        ++r.correct;
        ++r.per_type[sp.type].correct;
      }
    }
  }
  TypeScore total{r.gold, r.pred, r.correct, 0.0, 0.0, 0.0};
  detail::finish_score(total);
  r.precision = total.precision;
  r.recall = total.recall;
  r.f1 = total.f1;
  for (auto& [_, s] : r.per_type) detail::finish_score(s);
  return r;
}

// Fraction of positions where tags agree; padding never reaches here
// because sequences arrive unpadded.
inline double token_accuracy(const std::vector<std::vector<int>>& gold,
                             const std::vector<std::vector<int>>& pred) {
  if (gold.size() != pred.size())
    throw ArgumentError("token_accuracy: " + std::to_string(gold.size()) + " gold vs " +
                        std::to_string(pred.size()) + " predicted sentences");
  std::size_t total = 0, hit = 0;
  for (std::size_t s = 0; s < gold.size(); ++s) {
    if (gold[s].size() != pred[s].size())
      throw ArgumentError("token_accuracy: sentence " + std::to_string(s) +
                          " length mismatch");
    for (std::size_t i = 0; i < gold[s].size(); ++i) {
      ++total;
      if (gold[s][i] == pred[s][i]) ++hit;
    }
  }
  return total ? static_cast<double>(hit) / static_cast<double>(total) : 0.0;
}

// key=value block, one datum per line; re-parses to identical numbers.
inline std::string serialize_report(const EvalReport& r) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "spans.gold=" << r.gold << "\n";
  os << "spans.pred=" << r.pred << "\n";
  os << "spans.correct=" << r.correct << "\n";
  os << "precision=" << r.precision << "\n";
  os << "recall=" << r.recall << "\n";
  os << "f1=" << r.f1 << "\n";
  for (const auto& [type, s] : r.per_type) {
    os << "type." << type << ".gold=" << s.gold << "\n";
    os << "type." << type << ".pred=" << s.pred << "\n";
    os << "type." << type << ".correct=" << s.correct << "\n";
    os << "type." << type << ".precision=" << s.precision << "\n";
    os << "type." << type << ".recall=" << s.recall << "\n";
    os << "type." << type << ".f1=" << s.f1 << "\n";
  }
  return os.str();
}

inline EvalReport parse_report(std::istream& in) {
  EvalReport r;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("report line without '=': " + line);
    std::string key = line.substr(0, eq);
    std::string val = line.substr(eq + 1);
    auto as_u = [&] { return static_cast<std::size_t>(std::stoull(val)); };
    auto as_d = [&] { return std::stod(val); };
    if (key == "spans.gold") r.gold = as_u();
    else if (key == "spans.pred") r.pred = as_u();
    else if (key == "spans.correct") r.correct = as_u();
    else if (key == "precision") r.precision = as_d();
    else if (key == "recall") r.recall = as_d();
    else if (key == "f1") r.f1 = as_d();
    else if (key.rfind("type.", 0) == 0) {
      std::string rest = key.substr(5);
      auto dot = rest.rfind('.');
      if (dot == std::string::npos) throw ParseError("bad report key: " + key);
      TypeScore& s = r.per_type[rest.substr(0, dot)];
      std::string field = rest.substr(dot + 1);
      if (field == "gold") s.gold = as_u();
      else if (field == "pred") s.pred = as_u();
      else if (field == "correct") s.correct = as_u();
      else if (field == "precision") s.precision = as_d();
      else if (field == "recall") s.recall = as_d();
      else if (field == "f1") s.f1 = as_d();
      else throw ParseError("bad report key: " + key);
    } else {
      throw ParseError("bad report key: " + key);
    }
  }
  return r;
}

// Human-readable companion table.
inline std::string render_report(const EvalReport& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << "span micro scores (gold=" << r.gold << " pred=" << r.pred
     << " correct=" << r.correct << ")\n";
  os << "  overall  P=" << r.precision << " R=" << r.recall << " F1=" << r.f1 << "\n";
  for (const auto& [type, s] : r.per_type)
    os << "  " << std::left << std::setw(8) << type << std::right << " P=" << s.precision
       << " R=" << s.recall << " F1=" << s.f1 << " (gold=" << s.gold
       << " pred=" << s.pred << ")\n";
  return os.str();
}

}  // namespace gti
