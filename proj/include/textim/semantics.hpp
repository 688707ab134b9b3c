#pragma once

#include <textim/llm_client.hpp>
#include <textim/motion.hpp>

#include <set>
#include <string>
#include <vector>

namespace textim {

// One extracted (body part, action phrase) pair.
struct InteractionPair {
  BodyPart part = BodyPart::Pelvis;
  std::string phrase;

  bool operator==(const InteractionPair&) const = default;
};

// Extraction result for one sentence. Empty `pairs` is the 'none' case;
// phrases are verbatim substrings of the sentence; residual_text is the
// rest of the sentence not covered by any phrase.
struct InteractionSpec {
  std::vector<InteractionPair> pairs;
  std::string residual_text;

  bool none() const { return pairs.empty(); }
  std::set<BodyPart> partSet() const;
  std::string instructionText() const;  // phrases joined with ", "

  bool operator==(const InteractionSpec&) const = default;
};

enum class Verdict {
  Accepted,
  ContentAmended,  // accepted after canonicalization fixed something
  FormatRejected,
  ContentRejected,
};

std::string verdictName(Verdict verdict);

struct ParseOutcome {
  Verdict verdict = Verdict::FormatRejected;
  InteractionSpec spec;  // meaningful only when accepted()
  std::string detail;

  bool accepted() const {
    return verdict == Verdict::Accepted || verdict == Verdict::ContentAmended;
  }
};

struct LlmTranscript {
  int attempt = 0;  // 1-based
  std::string prompt;
  std::string response;  // empty when the call itself failed
  bool transport_error = false;
  Verdict verdict = Verdict::FormatRejected;
  std::string detail;
};

struct ExtractionResult {
  InteractionSpec spec;
  std::vector<LlmTranscript> transcripts;
  bool fell_back = false;  // all attempts failed, 'none' assumed
};

// Prompt layout, in order: objective, interaction definition, answer-choice
// constraint with the 'none' rule, response grammar, worked examples, and
// the sentence to analyze last.
std::string buildPrompt(const std::string& sentence);

// Accepts either the bare token "none" or one "part: phrase" line per part.
// Joint names canonicalize to their part (e.g. wrist -> arm) and sided
// families need an explicit left/right modifier. Phrases must occur
// verbatim in the sentence; a case-insensitive hit is amended to the
// sentence's own spelling. A leading "answer:"/"response:" label line is
// tolerated.
ParseOutcome parseAndValidate(const std::string& response,
                              const std::string& sentence);

// Canonical response text for a spec; parseAndValidate on it round-trips.
std::string canonicalResponse(const InteractionSpec& spec);

// Up to three client calls; the first accepted response wins. Transport
// errors consume attempts. After three failures the sentence is 'none'.
ExtractionResult extractWithRetry(const std::string& sentence,
                                  LlmClient& client);

// Deterministic keyword extractor for offline use: an interaction verb plus
// an explicitly sided body-part mention yields a pair whose phrase spans
// from the earlier of the two to the later.
InteractionSpec fallbackRuleExtractor(const std::string& sentence);

// Sentence with each pair's first phrase occurrence removed, whitespace
// collapsed and trimmed.
std::string splitResidual(const std::string& sentence,
                          const InteractionSpec& spec);

}  // namespace textim
