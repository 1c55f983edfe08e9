#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "affordkit/points.hpp"

namespace affordkit {

enum class StepKind { IdentifyReference = 0, DetermineSubtype = 1, DefineSearchSpace = 2, GenerateOutput = 3 };

inline constexpr std::array<StepKind, 4> kStepOrder = {
    StepKind::IdentifyReference, StepKind::DetermineSubtype, StepKind::DefineSearchSpace,
    StepKind::GenerateOutput};

/// Canonical header label, e.g. "Identify Reference Object".
std::string_view step_label(StepKind kind);
int step_ordinal(StepKind kind);

/// Character range [begin, end) in the source text.
struct TextSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
};

struct ReasoningStep {
  StepKind kind = StepKind::IdentifyReference;
  std::string text;
  int ordinal = 1;
  // From the header start up to the next header (or end of text for the last
  // step). Zero-width for documents that were built rather than parsed.
  TextSpan span;
};

enum class SubtypeKind { PlacementAffordance, ObjectReference, FreeSpaceReference, Other };

struct AffordanceSubtype {
  SubtypeKind kind = SubtypeKind::PlacementAffordance;
  std::string phrase;  // verbatim phrase for Other, canonical name otherwise

  static AffordanceSubtype known(SubtypeKind kind);
  static AffordanceSubtype other(std::string phrase);

  bool operator==(const AffordanceSubtype& o) const { return kind == o.kind && phrase == o.phrase; }
};

enum class Severity { Warning, Error };

struct Diagnostic {
  Severity severity = Severity::Warning;
  std::string code;
  std::string message;
  std::size_t offset = 0;
};

enum class RangePolicy { Clamp, Reject };

struct CoRDocument {
  std::vector<ReasoningStep> steps;
  std::optional<AffordanceSubtype> subtype;
  PointSet points = PointSet::unparsed();
  std::string raw_text;
  bool complete = false;
  std::vector<Diagnostic> diagnostics;

  const ReasoningStep* step(StepKind kind) const;
};

/// Builds a complete document from four step texts in canonical order.
CoRDocument make_document(const std::array<std::string, 4>& step_texts, AffordanceSubtype subtype,
                          std::vector<Point> points);

/// Extracts the tuples of the last bracketed coordinate list in `text`.
/// Under RangePolicy::Reject an out-of-range coordinate throws
/// Error(OutOfRange) naming the point index; under Clamp it is clamped into
/// [0, 1] and a warning is appended to `diagnostics`.
PointSet parse_points(std::string_view text, RangePolicy policy = RangePolicy::Clamp,
                      std::vector<Diagnostic>* diagnostics = nullptr);

/// Total parser: never throws. Structural problems land in `diagnostics` and
/// clear `complete`.
CoRDocument parse_document(std::string_view text, RangePolicy policy = RangePolicy::Clamp);

/// Canonical text form. Throws Error(IncompleteDocument) unless `complete`.
std::string serialize(const CoRDocument& doc);

/// Subtype recognised from a DetermineSubtype step text.
AffordanceSubtype extract_subtype(std::string_view step_text);

std::string_view subtype_name(SubtypeKind kind);

}  // namespace affordkit
