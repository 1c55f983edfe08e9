#include "affordkit/cor_schema.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fmt/format.h>

#include "affordkit/error.hpp"

namespace affordkit {

namespace {

constexpr std::string_view kWhitespace = " \t\r\n\f\v";

bool is_space(char c) { return kWhitespace.find(c) != std::string_view::npos; }

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(kWhitespace);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(kWhitespace);
  return s.substr(b, e - b + 1);
}

char lower(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }

bool istarts_with(std::string_view s, std::string_view prefix) {
  if (s.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i)
    if (lower(s[i]) != lower(prefix[i])) return false;
  return true;
}

// Lower-cased copy with curly apostrophes folded to ASCII and hyphens/spaces
// runs collapsed to a single space, used for label and keyword matching.
std::string fold(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    if (s.substr(i, 3) == "\xE2\x80\x99") {  // U+2019
      c = '\'';
      i += 2;
    }
    if (c == '-' || c == '_' || is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(lower(c));
  }
  return out;
}

struct LabelAlias {
  std::string_view text;  // already folded
  StepKind kind;
};

constexpr LabelAlias kAliases[] = {
    {"identify reference object", StepKind::IdentifyReference},
    {"identify reference objects", StepKind::IdentifyReference},
    {"identify the reference object", StepKind::IdentifyReference},
    {"identifying reference objects", StepKind::IdentifyReference},
    {"identify reference", StepKind::IdentifyReference},
    {"determine goal's subtype", StepKind::DetermineSubtype},
    {"determine the goal's subtype", StepKind::DetermineSubtype},
    {"determining the goal's subtype", StepKind::DetermineSubtype},
    {"determine subtype", StepKind::DetermineSubtype},
    {"define target area", StepKind::DefineSearchSpace},
    {"define the target area", StepKind::DefineSearchSpace},
    {"defining the specific target area", StepKind::DefineSearchSpace},
    {"define search space", StepKind::DefineSearchSpace},
    {"define the search space", StepKind::DefineSearchSpace},
    {"generate output", StepKind::GenerateOutput},
    {"generating output", StepKind::GenerateOutput},
    {"generate the output", StepKind::GenerateOutput},
};

// Matches a known label at the start of `s` followed by optional markup and a
// colon. Returns the kind and the offset just past the colon.
std::optional<std::pair<StepKind, std::size_t>> match_label(std::string_view s) {
  const auto colon = s.find(':');
  if (colon == std::string_view::npos || colon > 64) return std::nullopt;
  std::string_view label = s.substr(0, colon);
  while (!label.empty() && (label.back() == '*' || is_space(label.back()))) label.remove_suffix(1);
  const std::string folded = fold(label);
  for (const auto& alias : kAliases)
    if (folded == alias.text) return std::make_pair(alias.kind, colon + 1);
  return std::nullopt;
}

struct Header {
  StepKind kind;
  std::size_t line_begin;  // absolute offset of the header line
  std::size_t text_begin;  // absolute offset just past the header
};

std::size_t skip_spaces(std::string_view s, std::size_t i) {
  while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
  return i;
}

// Recognises one header at the start of `line`.
std::optional<std::pair<StepKind, std::size_t>> match_header(std::string_view line) {
  std::size_t i = skip_spaces(line, 0);
  while (i < line.size() && (line[i] == '#' || line[i] == '*')) ++i;
  i = skip_spaces(line, i);

  // "Step k <sep> Label:" or "Step k: text"
  if (istarts_with(line.substr(i), "step")) {
    std::size_t j = skip_spaces(line, i + 4);
    const std::size_t digits_begin = j;
    while (j < line.size() && std::isdigit(static_cast<unsigned char>(line[j]))) ++j;
    if (j == digits_begin || j - digits_begin > 2) return std::nullopt;
    int number = 0;
    std::from_chars(line.data() + digits_begin, line.data() + j, number);
    j = skip_spaces(line, j);
    bool colon_sep = false;
    const std::string_view rest = line.substr(j);
    if (rest.starts_with("\xE2\x80\x94") || rest.starts_with("\xE2\x80\x93")) {
      j += 3;
    } else if (!rest.empty() && (rest[0] == '-' || rest[0] == '.' || rest[0] == ')')) {
      j += 1;
    } else if (!rest.empty() && rest[0] == ':') {
      j += 1;
      colon_sep = true;
    }
    while (j < line.size() && line[j] == '*') ++j;
    j = skip_spaces(line, j);
    if (auto m = match_label(line.substr(j))) return std::make_pair(m->first, j + m->second);
    if (colon_sep && number >= 1 && number <= 4)
      return std::make_pair(kStepOrder[static_cast<std::size_t>(number - 1)], j);
    return std::nullopt;
  }

  // "(k) Label:", "k. Label:", "k) Label:"
  std::size_t j = i;
  if (j < line.size() && line[j] == '(') ++j;
  const std::size_t digits_begin = j;
  while (j < line.size() && std::isdigit(static_cast<unsigned char>(line[j]))) ++j;
  if (j > digits_begin && j - digits_begin <= 2 && j < line.size() &&
      (line[j] == ')' || line[j] == '.')) {
    j = skip_spaces(line, j + 1);
    while (j < line.size() && line[j] == '*') ++j;
    if (auto m = match_label(line.substr(j))) return std::make_pair(m->first, j + m->second);
    return std::nullopt;
  }

  // bare prose label
  if (auto m = match_label(line.substr(i))) return std::make_pair(m->first, i + m->second);
  return std::nullopt;
}

// ---- point list grammar ----------------------------------------------------

bool is_digit(char c) { return c >= '0' && c <= '9'; }

// [+-]? (d+ (. d*)? | . d+) ([eE] [+-]? d+)?
std::optional<double> scan_number(std::string_view s, std::size_t& pos) {
  std::size_t i = pos;
  const std::size_t start = i;
  if (i < s.size() && (s[i] == '+' || s[i] == '-')) ++i;
  const std::size_t mantissa = i;
  std::size_t int_digits = 0, frac_digits = 0;
  while (i < s.size() && is_digit(s[i])) ++i, ++int_digits;
  if (i < s.size() && s[i] == '.') {
    ++i;
    while (i < s.size() && is_digit(s[i])) ++i, ++frac_digits;
  }
  if (int_digits + frac_digits == 0) return std::nullopt;
  if (i < s.size() && (s[i] == 'e' || s[i] == 'E')) {
    std::size_t k = i + 1;
    if (k < s.size() && (s[k] == '+' || s[k] == '-')) ++k;
    const std::size_t exp_digits = k;
    while (k < s.size() && is_digit(s[k])) ++k;
    if (k > exp_digits) i = k;
  }
  double value = 0.0;
  const bool negative = s[start] == '-';
  auto [ptr, ec] = std::from_chars(s.data() + mantissa, s.data() + i, value);
  if (ptr != s.data() + i) return std::nullopt;
  if (ec == std::errc::result_out_of_range) {
    // overflow to +inf, underflow to 0; the range policy handles the rest
    const auto e = s.substr(mantissa, i - mantissa).find_first_of("eE");
    value = (e != std::string_view::npos && s[mantissa + e + 1] == '-') ? 0.0 : HUGE_VAL;
  } else if (ec != std::errc()) {
    return std::nullopt;
  }
  pos = i;
  return negative ? -value : value;
}

std::size_t skip_ws(std::string_view s, std::size_t i) {
  while (i < s.size() && is_space(s[i])) ++i;
  return i;
}

// "(x, y)" starting at s[pos] == '('. On success advances pos past ')'.
std::optional<Point> scan_tuple(std::string_view s, std::size_t& pos) {
  std::size_t i = skip_ws(s, pos + 1);
  auto x = scan_number(s, i);
  if (!x) return std::nullopt;
  i = skip_ws(s, i);
  if (i >= s.size() || s[i] != ',') return std::nullopt;
  i = skip_ws(s, i + 1);
  auto y = scan_number(s, i);
  if (!y) return std::nullopt;
  i = skip_ws(s, i);
  if (i >= s.size() || s[i] != ')') return std::nullopt;
  pos = i + 1;
  return Point{*x, *y};
}

struct ListRegion {
  std::size_t begin = 0;  // offset of the opening bracket
  std::size_t end = 0;    // offset one past the closing bracket
};

struct TupleScan {
  std::vector<Point> points;
  std::vector<std::size_t> offsets;
  std::size_t malformed = 0;
  std::vector<std::size_t> malformed_offsets;
};

TupleScan scan_tuples(std::string_view text, ListRegion region) {
  TupleScan out;
  const std::string_view inner = text.substr(0, region.end - 1);
  std::size_t i = region.begin + 1;
  while (i < inner.size()) {
    if (inner[i] != '(') {
      ++i;
      continue;
    }
    std::size_t pos = i;
    if (auto p = scan_tuple(inner, pos)) {
      out.points.push_back(*p);
      out.offsets.push_back(i);
      i = pos;
    } else {
      ++out.malformed;
      out.malformed_offsets.push_back(i);
      ++i;
    }
  }
  return out;
}

// The last bracketed region holding at least one well-formed tuple. Square
// lists do not nest; round outer lists are a '(' whose content opens with '('.
std::optional<ListRegion> find_final_list(std::string_view text) {
  std::optional<ListRegion> best;
  auto consider = [&](ListRegion r) {
    if (best && best->end >= r.end) return;
    if (!scan_tuples(text, r).points.empty()) best = r;
  };
  std::size_t square_open = std::string_view::npos;
  std::vector<std::size_t> parens;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '[') {
      square_open = i;
    } else if (c == ']') {
      if (square_open != std::string_view::npos) consider({square_open, i + 1});
      square_open = std::string_view::npos;
    } else if (c == '(') {
      parens.push_back(i);
    } else if (c == ')') {
      if (parens.empty()) continue;
      const std::size_t open = parens.back();
      parens.pop_back();
      const std::size_t first = skip_ws(text, open + 1);
      if (first < i && text[first] == '(') {
        std::size_t probe = skip_ws(text, first + 1);
        const bool looks_numeric = probe < i && (is_digit(text[probe]) || text[probe] == '.' ||
                                                 text[probe] == '-' || text[probe] == '+');
        if (looks_numeric) consider({open, i + 1});
      }
    }
  }
  return best;
}

PointSet points_from_region(std::string_view text, ListRegion region, RangePolicy policy,
                            std::vector<Diagnostic>* diagnostics) {
  TupleScan scan = scan_tuples(text, region);
  if (diagnostics) {
    for (std::size_t off : scan.malformed_offsets)
      diagnostics->push_back({Severity::Warning, "malformed_tuple", "skipped malformed tuple", off});
  }
  PointSet out;
  out.points.reserve(scan.points.size());
  for (std::size_t idx = 0; idx < scan.points.size(); ++idx) {
    Point p = scan.points[idx];
    const bool in_range = p.x >= 0.0 && p.x <= 1.0 && p.y >= 0.0 && p.y <= 1.0;
    if (!in_range) {
      if (policy == RangePolicy::Reject)
        throw Error(ErrorCode::OutOfRange, fmt::format("point {}", idx));
      p.x = std::clamp(p.x, 0.0, 1.0);
      p.y = std::clamp(p.y, 0.0, 1.0);
      if (diagnostics)
        diagnostics->push_back({Severity::Warning, "clamped",
                                fmt::format("point {} clamped into [0,1]", idx), scan.offsets[idx]});
    }
    out.points.push_back(p);
  }
  return out;
}

// Last non-empty quoted phrase: "...", “...”, or ``...''.
std::optional<std::string_view> last_quoted(std::string_view s) {
  std::optional<std::string_view> last;
  std::size_t i = 0;
  while (i < s.size()) {
    std::string_view open, close;
    if (s[i] == '"') {
      open = "\"";
      close = "\"";
    } else if (s.substr(i, 3) == "\xE2\x80\x9C") {
      open = "\xE2\x80\x9C";
      close = "\xE2\x80\x9D";
    } else if (s.substr(i, 2) == "``") {
      open = "``";
      close = "''";
    } else {
      ++i;
      continue;
    }
    const std::size_t body = i + open.size();
    const std::size_t end = s.find(close, body);
    if (end == std::string_view::npos) break;
    const std::string_view phrase = trim(s.substr(body, end - body));
    if (!phrase.empty()) last = phrase;
    i = end + close.size();
  }
  return last;
}

constexpr std::pair<std::string_view, SubtypeKind> kSubtypeKeywords[] = {
    {"placement affordance", SubtypeKind::PlacementAffordance},
    {"free space reference", SubtypeKind::FreeSpaceReference},
    {"freespace reference", SubtypeKind::FreeSpaceReference},
    {"object reference", SubtypeKind::ObjectReference},
};

std::optional<SubtypeKind> known_subtype(std::string_view phrase) {
  std::string folded = fold(phrase);
  while (!folded.empty() && (folded.back() == '.' || folded.back() == ',')) folded.pop_back();
  for (const auto& [kw, kind] : kSubtypeKeywords)
    if (folded == kw) return kind;
  return std::nullopt;
}

std::string single_line(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending = false;
  for (char c : trim(s)) {
    if (is_space(c)) {
      pending = true;
      continue;
    }
    if (pending) out.push_back(' ');
    pending = false;
    out.push_back(c);
  }
  return out;
}

std::string strip_quotes(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"') continue;
    if (s.substr(i, 2) == "``") {
      ++i;
      continue;
    }
    if (s.substr(i, 3) == "\xE2\x80\x9C" || s.substr(i, 3) == "\xE2\x80\x9D") {
      i += 2;
      continue;
    }
    out.push_back(s[i]);
  }
  return single_line(out);
}

}  // namespace

// ---- public surface --------------------------------------------------------

std::string_view step_label(StepKind kind) {
  switch (kind) {
    case StepKind::IdentifyReference: return "Identify Reference Object";
    case StepKind::DetermineSubtype: return "Determine Goal's Subtype";
    case StepKind::DefineSearchSpace: return "Define Target Area";
    case StepKind::GenerateOutput: return "Generate Output";
  }
  return "";
}

int step_ordinal(StepKind kind) { return static_cast<int>(kind) + 1; }

std::string_view subtype_name(SubtypeKind kind) {
  switch (kind) {
    case SubtypeKind::PlacementAffordance: return "Placement Affordance";
    case SubtypeKind::ObjectReference: return "Object Reference";
    case SubtypeKind::FreeSpaceReference: return "Free Space Reference";
    case SubtypeKind::Other: return "Other";
  }
  return "";
}

AffordanceSubtype AffordanceSubtype::known(SubtypeKind kind) {
  if (kind == SubtypeKind::Other) throw Error(ErrorCode::InvalidArgument, "Other needs a phrase");
  return AffordanceSubtype{kind, std::string(subtype_name(kind))};
}

AffordanceSubtype AffordanceSubtype::other(std::string phrase) {
  std::string cleaned;
  for (char c : phrase)
    if (c != '"') cleaned.push_back(c);
  cleaned = single_line(cleaned);
  if (cleaned.empty()) throw Error(ErrorCode::InvalidArgument, "subtype phrase is empty");
  if (auto k = known_subtype(cleaned)) return known(*k);
  return AffordanceSubtype{SubtypeKind::Other, std::move(cleaned)};
}

AffordanceSubtype extract_subtype(std::string_view step_text) {
  if (auto quoted = last_quoted(step_text)) {
    if (auto k = known_subtype(*quoted)) return AffordanceSubtype::known(*k);
    return AffordanceSubtype::other(std::string(*quoted));
  }
  const std::string folded = fold(step_text);
  std::size_t best_pos = std::string::npos;
  SubtypeKind best = SubtypeKind::Other;
  for (const auto& [kw, kind] : kSubtypeKeywords) {
    const auto pos = folded.find(kw);
    if (pos < best_pos) {
      best_pos = pos;
      best = kind;
    }
  }
  if (best_pos != std::string::npos) return AffordanceSubtype::known(best);
  const std::string_view t = trim(step_text);
  if (t.empty()) throw Error(ErrorCode::InvalidArgument, "empty subtype step");
  return AffordanceSubtype::other(std::string(t));
}

const ReasoningStep* CoRDocument::step(StepKind kind) const {
  for (const auto& s : steps)
    if (s.kind == kind) return &s;
  return nullptr;
}

std::string format_point_list(const std::vector<Point>& points) {
  std::string out = "[";
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (i) out += ", ";
    // + 0.0 folds -0.0 so it prints as 0.000
    out += fmt::format("({:.3f}, {:.3f})", points[i].x + 0.0, points[i].y + 0.0);
  }
  out += "]";
  return out;
}

CoRDocument make_document(const std::array<std::string, 4>& step_texts, AffordanceSubtype subtype,
                          std::vector<Point> points) {
  CoRDocument doc;
  bool ok = true;
  for (std::size_t i = 0; i < 4; ++i) {
    const std::string text = single_line(step_texts[i]);
    if (text.empty()) ok = false;
    doc.steps.push_back({kStepOrder[i], text, static_cast<int>(i) + 1, {}});
  }
  for (const auto& p : points)
    if (!(p.x >= 0.0 && p.x <= 1.0 && p.y >= 0.0 && p.y <= 1.0)) ok = false;
  doc.subtype = std::move(subtype);
  doc.points = PointSet{std::move(points), true};
  doc.complete = ok && !doc.points.empty();
  doc.raw_text = doc.complete ? serialize(doc) : std::string();
  return doc;
}

PointSet parse_points(std::string_view text, RangePolicy policy, std::vector<Diagnostic>* diagnostics) {
  const auto region = find_final_list(text);
  if (!region) return PointSet::unparsed();
  return points_from_region(text, *region, policy, diagnostics);
}

CoRDocument parse_document(std::string_view text, RangePolicy policy) {
  CoRDocument doc;
  doc.raw_text = std::string(text);
  auto& diags = doc.diagnostics;

  const auto list = find_final_list(text);
  const std::size_t list_begin = list ? list->begin : text.size();

  std::vector<Header> headers;
  bool seen[4] = {false, false, false, false};
  std::size_t line_begin = 0;
  while (line_begin < text.size() && line_begin < list_begin) {
    std::size_t line_end = text.find('\n', line_begin);
    if (line_end == std::string_view::npos) line_end = text.size();
    if (auto h = match_header(text.substr(line_begin, line_end - line_begin))) {
      const auto idx = static_cast<std::size_t>(h->first);
      if (seen[idx]) {
        diags.push_back({Severity::Warning, "duplicate_step",
                         fmt::format("repeated header for step {}", idx + 1), line_begin});
      } else {
        seen[idx] = true;
        headers.push_back({h->first, line_begin, line_begin + h->second});
      }
    }
    line_begin = line_end + 1;
  }

  if (headers.empty()) {
    diags.push_back({Severity::Error, "no_steps", "no reasoning step headers found", 0});
  } else if (!trim(text.substr(0, headers.front().line_begin)).empty()) {
    diags.push_back({Severity::Warning, "preamble", "text before the first step", 0});
  }

  for (std::size_t h = 0; h < headers.size(); ++h) {
    const std::size_t next = h + 1 < headers.size() ? headers[h + 1].line_begin : text.size();
    std::size_t text_end = next;
    if (list && list_begin >= headers[h].text_begin && list_begin < text_end) text_end = list_begin;
    const std::string_view body = trim(text.substr(headers[h].text_begin, text_end - headers[h].text_begin));
    if (body.empty()) {
      diags.push_back({Severity::Error, "empty_step",
                       fmt::format("step {} has no text", step_ordinal(headers[h].kind)), headers[h].line_begin});
      continue;
    }
    doc.steps.push_back({headers[h].kind, std::string(body), step_ordinal(headers[h].kind),
                         {headers[h].line_begin, next}});
  }

  bool ordered = doc.steps.size() == 4;
  for (std::size_t i = 0; i < doc.steps.size(); ++i) {
    if (i > 0 && static_cast<int>(doc.steps[i].kind) < static_cast<int>(doc.steps[i - 1].kind)) {
      diags.push_back({Severity::Error, "out_of_order", "steps are not in canonical order", doc.steps[i].span.begin});
      ordered = false;
    }
  }
  if (doc.steps.size() < 4 && !headers.empty())
    diags.push_back({Severity::Error, "missing_steps",
                     fmt::format("found {} of 4 steps", doc.steps.size()), 0});

  if (const auto* s = doc.step(StepKind::DetermineSubtype)) doc.subtype = extract_subtype(s->text);

  if (list) {
    try {
      doc.points = points_from_region(text, *list, policy, &diags);
    } catch (const Error& e) {
      diags.push_back({Severity::Error, "out_of_range", e.what(), list->begin});
      doc.points = PointSet::unparsed();
    }
    if (!trim(text.substr(list->end)).empty())
      diags.push_back({Severity::Warning, "trailing_text", "text after the coordinate list", list->end});
  } else {
    diags.push_back({Severity::Error, "no_points", "no coordinate list found", text.size()});
  }

  doc.complete = ordered && doc.points.parsed && !doc.points.empty();
  return doc;
}

std::string serialize(const CoRDocument& doc) {
  if (!doc.complete || doc.steps.size() != 4 || !doc.subtype)
    throw Error(ErrorCode::IncompleteDocument, "only complete documents can be serialized");
  std::string out;
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& step = doc.steps[i];
    if (step.kind != kStepOrder[i])
      throw Error(ErrorCode::IncompleteDocument, "steps are not in canonical order");
    std::string text = single_line(step.text);
    if (step.kind == StepKind::DetermineSubtype && !(extract_subtype(text) == *doc.subtype)) {
      // The trailer must be the last quoted phrase in the step.
      text = strip_quotes(text);
      text += fmt::format(" Subtype: \"{}\".", doc.subtype->phrase);
    }
    out += fmt::format("Step {} \xE2\x80\x94 {}: {}\n", i + 1, step_label(step.kind), text);
  }
  out += format_point_list(doc.points.points);
  return out;
}

}  // namespace affordkit
