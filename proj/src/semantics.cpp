#include <textim/semantics.hpp>

#include <algorithm>
#include <cctype>
#include <map>
#include <optional>

namespace textim {

namespace {

std::string toLower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string collapseWhitespace(const std::string& s) {
  std::string out;
  bool in_space = true;  // drops leading whitespace
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      in_space = true;
      continue;
    }
    if (in_space && !out.empty()) out += ' ';
    in_space = false;
    out += c;
  }
  return out;
}

struct Token {
  std::string text;  // lowercased
  size_t begin = 0;
  size_t end = 0;
};

std::vector<Token> tokenize(const std::string& s) {
  std::vector<Token> tokens;
  size_t i = 0;
  while (i < s.size()) {
    if (!std::isalpha(static_cast<unsigned char>(s[i]))) {
      ++i;
      continue;
    }
    size_t b = i;
    while (i < s.size() && std::isalpha(static_cast<unsigned char>(s[i]))) ++i;
    tokens.push_back({toLower(s.substr(b, i - b)), b, i});
  }
  return tokens;
}

enum class Family { Arm, Leg, Torso, Pelvis };

bool familySided(Family f) { return f == Family::Arm || f == Family::Leg; }

// Canonicalization table: joint words map to the part that owns them.
const std::map<std::string, Family>& nounFamily() {
  static const std::map<std::string, Family> table = {
      {"arm", Family::Arm},       {"hand", Family::Arm},
      {"wrist", Family::Arm},     {"elbow", Family::Arm},
      {"shoulder", Family::Arm},  {"collarbone", Family::Arm},
      {"collar", Family::Arm},
      {"leg", Family::Leg},       {"foot", Family::Leg},
      {"hip", Family::Leg},       {"knee", Family::Leg},
      {"ankle", Family::Leg},     {"heel", Family::Leg},
      {"torso", Family::Torso},   {"spine", Family::Torso},
      {"chest", Family::Torso},   {"back", Family::Torso},
      {"pelvis", Family::Pelvis},
  };
  return table;
}

BodyPart partFor(Family family, bool left) {
  switch (family) {
    case Family::Arm: return left ? BodyPart::LeftArm : BodyPart::RightArm;
    case Family::Leg: return left ? BodyPart::LeftLeg : BodyPart::RightLeg;
    case Family::Torso: return BodyPart::Torso;
    case Family::Pelvis: return BodyPart::Pelvis;
  }
  throw std::invalid_argument("partFor: unknown family");
}

struct CanonicalPart {
  std::optional<BodyPart> part;
  bool amended = false;
  std::string error;
};

CanonicalPart canonicalizePart(const std::string& part_text) {
  CanonicalPart out;
  std::vector<Token> tokens = tokenize(part_text);
  if (tokens.empty()) {
    out.error = "empty part name";
    return out;
  }

  bool left = false, right = false;
  std::optional<Family> family;
  for (const Token& tok : tokens) {
    if (tok.text == "left") left = true;
    if (tok.text == "right") right = true;
    if (!family) {
      auto hit = nounFamily().find(tok.text);
      if (hit != nounFamily().end()) family = hit->second;
    }
  }
  if (!family) {
    out.error = "unknown body part '" + trim(part_text) + "'";
    return out;
  }
  if (left && right) {
    out.error = "conflicting side modifiers in '" + trim(part_text) + "'";
    return out;
  }
  if (familySided(*family) && !left && !right) {
    out.error = "missing side modifier on '" + trim(part_text) + "'";
    return out;
  }
  out.part = partFor(*family, left);
  out.amended = collapseWhitespace(toLower(part_text)) != partName(*out.part);
  return out;
}

bool isNoneLine(const std::string& line) {
  std::string t = toLower(trim(line));
  if (!t.empty() && t.back() == '.') t.pop_back();
  return t == "none";
}

bool isLabelLine(const std::string& line) {
  std::string t = toLower(trim(line));
  return t == "answer:" || t == "answer" || t == "response:" || t == "response";
}

std::vector<std::string> responseLines(const std::string& response) {
  std::vector<std::string> lines;
  size_t start = 0;
  while (start <= response.size()) {
    size_t nl = response.find('\n', start);
    std::string line = nl == std::string::npos
                           ? response.substr(start)
                           : response.substr(start, nl - start);
    line = trim(line);
    if (!line.empty()) lines.push_back(line);
    if (nl == std::string::npos) break;
    start = nl + 1;
  }
  if (!lines.empty() && isLabelLine(lines.front()))
    lines.erase(lines.begin());
  return lines;
}

}  // namespace

std::set<BodyPart> InteractionSpec::partSet() const {
  std::set<BodyPart> parts;
  for (const InteractionPair& pair : pairs) parts.insert(pair.part);
  return parts;
}

std::string InteractionSpec::instructionText() const {
  std::string text;
  for (const InteractionPair& pair : pairs) {
    if (!text.empty()) text += ", ";
    text += pair.phrase;
  }
  return text;
}

std::string verdictName(Verdict verdict) {
  switch (verdict) {
    case Verdict::Accepted: return "accepted";
    case Verdict::ContentAmended: return "content-amended";
    case Verdict::FormatRejected: return "format-rejected";
    case Verdict::ContentRejected: return "content-rejected";
  }
  throw std::invalid_argument("verdictName: unknown verdict");
}

std::string buildPrompt(const std::string& sentence) {
  require(!sentence.empty(), "buildPrompt: empty sentence");
  std::string p;
  p +=
      "Identify all possible body parts involved in interacting with an "
      "object from the given sentence and extract the exact phrase that "
      "describes their action.\n";
  p +=
      "An 'interaction' involves any purposeful physical engagement with an "
      "object, such as holding, touching, lifting, carrying, moving, "
      "manipulating, or using it in any way.\n";
  p +=
      "If no body parts are interacting with an object, respond with 'none'. "
      "Choose body parts from: left arm, right arm, left leg, right leg, "
      "torso, pelvis.\n";
  p +=
      "Answer with one line per body part, each in the form "
      "'body part: exact phrase from the sentence'.\n";
  p += "Here are examples of how to format your responses:\n";
  p += "\n";
  p +=
      "Sentence: a person kicks the ball with their right foot while pushing "
      "a cart with both hands.\n";
  p += "Response:\n";
  p += "right leg: kicks the ball with their right foot\n";
  p += "left arm: pushing a cart with both hands\n";
  p += "right arm: pushing a cart with both hands\n";
  p += "\n";
  p += "Sentence: a person walks forward and sits down.\n";
  p += "Response:\n";
  p += "none\n";
  p += "\n";
  p += "Provide your answer for the following sentence: " + sentence;
  return p;
}

ParseOutcome parseAndValidate(const std::string& response,
                              const std::string& sentence) {
  ParseOutcome out;
  std::vector<std::string> lines = responseLines(response);

  if (lines.empty()) {
    out.verdict = Verdict::FormatRejected;
    out.detail = "empty response";
    return out;
  }

  int none_lines = 0;
  for (const std::string& line : lines) none_lines += isNoneLine(line);
  if (none_lines > 0) {
    if (lines.size() != 1) {
      out.verdict = Verdict::FormatRejected;
      out.detail = "'none' mixed with other lines";
      return out;
    }
    out.verdict = Verdict::Accepted;
    out.spec.residual_text = splitResidual(sentence, out.spec);
    return out;
  }

  bool amended = false;
  std::string notes;
  auto note = [&notes](const std::string& msg) {
    if (!notes.empty()) notes += "; ";
    notes += msg;
  };

  for (const std::string& line : lines) {
    size_t colon = line.find(':');
    if (colon == std::string::npos) {
      out.verdict = Verdict::FormatRejected;
      out.detail = "line without ':' separator: '" + line + "'";
      return out;
    }
    std::string part_text = trim(line.substr(0, colon));
    std::string phrase = trim(line.substr(colon + 1));
    if (phrase.empty()) {
      out.verdict = Verdict::FormatRejected;
      out.detail = "empty phrase in line: '" + line + "'";
      return out;
    }

    CanonicalPart canon = canonicalizePart(part_text);
    if (!canon.part) {
      out.verdict = Verdict::ContentRejected;
      out.detail = canon.error;
      return out;
    }
    if (canon.amended) {
      amended = true;
      note("'" + part_text + "' canonicalized to '" + partName(*canon.part) +
           "'");
    }

    if (sentence.find(phrase) == std::string::npos) {
      size_t pos = toLower(sentence).find(toLower(phrase));
      if (pos == std::string::npos) {
        out.verdict = Verdict::ContentRejected;
        out.detail = "phrase not found in sentence: '" + phrase + "'";
        return out;
      }
      phrase = sentence.substr(pos, phrase.size());
      amended = true;
      note("phrase respelled from the sentence");
    }

    bool duplicate = false;
    for (const InteractionPair& existing : out.spec.pairs) {
      if (existing.part != *canon.part) continue;
      if (existing.phrase == phrase) {
        duplicate = true;
        amended = true;
        note("duplicate line for '" + partName(*canon.part) + "' dropped");
        break;
      }
      out.verdict = Verdict::ContentRejected;
      out.detail = "conflicting phrases for '" + partName(*canon.part) + "'";
      return out;
    }
    if (!duplicate) out.spec.pairs.push_back({*canon.part, phrase});
  }

  out.spec.residual_text = splitResidual(sentence, out.spec);
  out.verdict = amended ? Verdict::ContentAmended : Verdict::Accepted;
  out.detail = notes;
  return out;
}

std::string canonicalResponse(const InteractionSpec& spec) {
  if (spec.none()) return "none";
  std::string text;
  for (const InteractionPair& pair : spec.pairs) {
    if (!text.empty()) text += "\n";
    text += partName(pair.part) + ": " + pair.phrase;
  }
  return text;
}

ExtractionResult extractWithRetry(const std::string& sentence,
                                  LlmClient& client) {
  ExtractionResult result;
  const std::string prompt = buildPrompt(sentence);

  for (int attempt = 1; attempt <= 3; ++attempt) {
    LlmTranscript tr;
    tr.attempt = attempt;
    tr.prompt = prompt;
    try {
      tr.response = client.complete(prompt);
    } catch (const ExternalServiceError& err) {
      tr.transport_error = true;
      tr.verdict = Verdict::FormatRejected;
      tr.detail = err.what();
      result.transcripts.push_back(tr);
      continue;
    }
    ParseOutcome outcome = parseAndValidate(tr.response, sentence);
    tr.verdict = outcome.verdict;
    tr.detail = outcome.detail;
    result.transcripts.push_back(tr);
    if (outcome.accepted()) {
      result.spec = outcome.spec;
      return result;
    }
  }

  result.spec = InteractionSpec{};
  result.spec.residual_text = splitResidual(sentence, result.spec);
  result.fell_back = true;
  return result;
}

namespace {

// Verb forms that signal an object interaction for the offline extractor.
const std::set<std::string>& interactionVerbs() {
  static const std::set<std::string> verbs = {
      "kick",  "kicks",  "kicked",  "kicking",  "wave",  "waves",  "waved",
      "waving", "wipe",  "wipes",   "wiped",    "wiping", "clean", "cleans",
      "cleaned", "cleaning", "pick", "picks",   "picked", "picking", "grab",
      "grabs", "grabbed", "grabbing", "hold",   "holds", "held",   "holding",
      "lift",  "lifts",  "lifted",  "lifting",  "carry", "carries", "carried",
      "carrying", "throw", "throws", "threw",   "thrown", "throwing", "push",
      "pushes", "pushed", "pushing", "pull",    "pulls", "pulled", "pulling",
      "touch", "touches", "touched", "touching", "catch", "catches", "caught",
      "catching", "open", "opens",  "opened",   "opening", "swing", "swings",
      "swung", "swinging", "drink", "drinks",   "drank", "drinking", "press",
      "presses", "pressed", "pressing", "bend", "bends", "bent",   "bending",
      "punch", "punches", "punched", "punching",
  };
  return verbs;
}

struct PartMention {
  BodyPart part;
  size_t token_index;
  size_t begin;  // character span including the side modifier
  size_t end;
};

}  // namespace

InteractionSpec fallbackRuleExtractor(const std::string& sentence) {
  InteractionSpec spec;
  std::vector<Token> tokens = tokenize(sentence);

  std::vector<size_t> verb_indices;
  for (size_t i = 0; i < tokens.size(); ++i)
    if (interactionVerbs().count(tokens[i].text)) verb_indices.push_back(i);

  std::vector<PartMention> mentions;
  for (size_t i = 0; i < tokens.size(); ++i) {
    auto hit = nounFamily().find(tokens[i].text);
    if (hit == nounFamily().end()) continue;
    Family family = hit->second;
    if (familySided(family)) {
      if (i == 0) continue;
      const std::string& prev = tokens[i - 1].text;
      if (prev != "left" && prev != "right") continue;  // never guess a side
      mentions.push_back({partFor(family, prev == "left"), i,
                          tokens[i - 1].begin, tokens[i].end});
    } else {
      mentions.push_back({partFor(family, false), i, tokens[i].begin,
                          tokens[i].end});
    }
  }

  if (verb_indices.empty() || mentions.empty()) {
    spec.residual_text = splitResidual(sentence, spec);
    return spec;
  }

  for (const PartMention& mention : mentions) {
    bool seen = false;
    for (const InteractionPair& pair : spec.pairs)
      if (pair.part == mention.part) seen = true;
    if (seen) continue;

    // Nearest verb by token distance; the earlier one wins a tie.
    size_t best = verb_indices[0];
    auto distance = [&mention](size_t v) {
      return v > mention.token_index ? v - mention.token_index
                                     : mention.token_index - v;
    };
    for (size_t v : verb_indices)
      if (distance(v) < distance(best)) best = v;

    size_t begin = std::min(tokens[best].begin, mention.begin);
    size_t end = std::max(tokens[best].end, mention.end);
    spec.pairs.push_back({mention.part, sentence.substr(begin, end - begin)});
  }

  spec.residual_text = splitResidual(sentence, spec);
  return spec;
}

std::string splitResidual(const std::string& sentence,
                          const InteractionSpec& spec) {
  std::string working = sentence;
  for (const InteractionPair& pair : spec.pairs) {
    if (pair.phrase.empty()) continue;
    size_t pos = working.find(pair.phrase);
    if (pos == std::string::npos) continue;
    working.erase(pos, pair.phrase.size());
  }
  return collapseWhitespace(working);
}

}  // namespace textim
