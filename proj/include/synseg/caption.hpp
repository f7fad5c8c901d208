#pragma once

#include <optional>
#include <string>
#include <vector>

namespace synseg {

// Coarse part-of-speech tags. The mining algorithm only distinguishes NOUN
// and ADJ; everything else just breaks chunks.
enum class PosTag { Noun, Verb, Adj, Adv, Det, Adp, Pron, Num, Conj, Part, Other };

PosTag pos_tag_from_name(const std::string& name);  // "NOUN" -> Noun; unknown -> Other

struct PosToken {
  std::string text;  // lowercase surface
  PosTag tag = PosTag::Other;
};

struct CaptionRecord {
  std::string image_id;
  std::string caption;
  std::optional<std::vector<PosToken>> tokens;  // pre-tagged input, bypasses the tagger
};

struct NounPhraseSet {
  std::string image_id;
  std::vector<std::string> phrases;  // lowercase, deduplicated, first occurrence order
};

class PosProvider {
 public:
  virtual ~PosProvider() = default;
  virtual std::vector<PosToken> tag(const std::string& caption) const = 0;
};

// Word -> tag table loaded from a TSV data file ("word\tTAG" lines, '#'
// comments). Tokenization: ASCII [a-z0-9]+ runs after lowercasing, bytes
// >= 0x80 treated as word characters (UTF-8 passes through intact);
// punctuation separates. Unknown words tag as Other, so they are never
// nouns.
class LexiconTagger : public PosProvider {
 public:
  static LexiconTagger from_file(const std::string& path);

  std::vector<PosToken> tag(const std::string& caption) const override;
  size_t size() const { return entries_.size(); }

 private:
  std::vector<std::pair<std::string, PosTag>> entries_;  // sorted for lookup
  PosTag lookup(const std::string& word) const;
};

std::vector<std::string> tokenize_words(const std::string& text);  // lowercased word runs

struct ExclusionList {
  std::vector<std::string> terms;  // lowercase

  static ExclusionList from_file(const std::string& path);
  // True when any term occurs in phrase as a substring (phrase already lowercase).
  bool excludes(const std::string& phrase) const;
};

// Chunks = maximal runs of NOUN/ADJ tokens ending in a NOUN; each chunk keeps
// only its NOUN tokens, joined by single spaces. Duplicates collapse to the
// first occurrence.
NounPhraseSet extract_noun_phrases(const CaptionRecord& record, const PosProvider& tagger);

NounPhraseSet filter_generic(const NounPhraseSet& phrases, const ExclusionList& exclusion);

struct MineCounts {
  int64_t read = 0;
  int64_t emitted = 0;
  int64_t skipped_malformed = 0;
  int64_t skipped_empty = 0;  // records whose phrases all filtered away
};

// Streams TSV ("image_id\tcaption") or JSONL ({"image_id","caption","tokens"?})
// records, auto-detected by the first byte ('{' means JSONL). Writes one
// {"image_id", "categories"} JSONL line per record with surviving phrases,
// in input order. Malformed lines are counted and logged to stderr, never
// fatal; unreadable files are.
MineCounts mine_corpus(const std::string& input_path, const ExclusionList& exclusion,
                       const std::string& output_path, const PosProvider& tagger);

}  // namespace synseg
