#include "synseg/caption.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "synseg/errors.hpp"

namespace synseg {

using nlohmann::json;
using nlohmann::ordered_json;

// ============================================================
// Tags and tokenization
// ============================================================

PosTag pos_tag_from_name(const std::string& name) {
  if (name == "NOUN") return PosTag::Noun;
  if (name == "VERB") return PosTag::Verb;
  if (name == "ADJ") return PosTag::Adj;
  if (name == "ADV") return PosTag::Adv;
  if (name == "DET") return PosTag::Det;
  if (name == "ADP") return PosTag::Adp;
  if (name == "PRON") return PosTag::Pron;
  if (name == "NUM") return PosTag::Num;
  if (name == "CONJ") return PosTag::Conj;
  if (name == "PART") return PosTag::Part;
  return PosTag::Other;
}

namespace {

// ASCII-only case folding; multi-byte UTF-8 passes through unchanged. Input
// is assumed NFC-normalized (the usual state of caption corpora).
char fold(char c) {
  unsigned char u = static_cast<unsigned char>(c);
  if (u >= 'A' && u <= 'Z') return static_cast<char>(u - 'A' + 'a');
  return c;
}

bool is_word_byte(char c) {
  unsigned char u = static_cast<unsigned char>(c);
  if (u >= 0x80) return true;  // any UTF-8 continuation or lead byte
  return (u >= 'a' && u <= 'z') || (u >= '0' && u <= '9');
}

std::string fold_string(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) out.push_back(fold(c));
  return out;
}

}  // namespace

std::vector<std::string> tokenize_words(const std::string& text) {
  std::vector<std::string> words;
  std::string cur;
  for (char raw : text) {
    const char c = fold(raw);
    if (is_word_byte(c)) {
      cur.push_back(c);
    } else if (!cur.empty()) {
      words.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

// ============================================================
// Lexicon tagger
// ============================================================

LexiconTagger LexiconTagger::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open lexicon: " + path);
  LexiconTagger t;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const size_t tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 >= line.size()) {
      throw InputError("bad lexicon line " + std::to_string(line_no) + " in " + path);
    }
    std::string word = fold_string(line.substr(0, tab));
    std::string tag = line.substr(tab + 1);
    while (!tag.empty() && (tag.back() == '\r' || tag.back() == ' ')) tag.pop_back();
    t.entries_.emplace_back(std::move(word), pos_tag_from_name(tag));
  }
  std::sort(t.entries_.begin(), t.entries_.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  return t;
}

PosTag LexiconTagger::lookup(const std::string& word) const {
  auto it = std::lower_bound(entries_.begin(), entries_.end(), word,
                             [](const auto& e, const std::string& w) { return e.first < w; });
  if (it != entries_.end() && it->first == word) return it->second;
  return PosTag::Other;
}

std::vector<PosToken> LexiconTagger::tag(const std::string& caption) const {
  std::vector<PosToken> out;
  for (auto& w : tokenize_words(caption)) {
    out.push_back(PosToken{w, lookup(w)});
  }
  return out;
}

// ============================================================
// Exclusion list
// ============================================================

ExclusionList ExclusionList::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open exclusion list: " + path);
  ExclusionList list;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    // Trim surrounding spaces.
    size_t a = line.find_first_not_of(" \t");
    if (a == std::string::npos) continue;
    size_t b = line.find_last_not_of(" \t");
    list.terms.push_back(fold_string(line.substr(a, b - a + 1)));
  }
  return list;
}

bool ExclusionList::excludes(const std::string& phrase) const {
  for (const auto& term : terms) {
    if (!term.empty() && phrase.find(term) != std::string::npos) return true;
  }
  return false;
}

// ============================================================
// Extraction and filtering
// ============================================================

NounPhraseSet extract_noun_phrases(const CaptionRecord& record, const PosProvider& tagger) {
  std::vector<PosToken> tokens;
  if (record.tokens.has_value()) {
    tokens = *record.tokens;
    for (auto& t : tokens) t.text = fold_string(t.text);
  } else {
    tokens = tagger.tag(record.caption);
  }

  NounPhraseSet out;
  out.image_id = record.image_id;
  std::set<std::string> seen;

  size_t i = 0;
  while (i < tokens.size()) {
    if (tokens[i].tag != PosTag::Noun && tokens[i].tag != PosTag::Adj) {
      ++i;
      continue;
    }
    size_t j = i;
    size_t last_noun = std::string::npos;
    while (j < tokens.size() && (tokens[j].tag == PosTag::Noun || tokens[j].tag == PosTag::Adj)) {
      if (tokens[j].tag == PosTag::Noun) last_noun = j;
      ++j;
    }
    // Chunk is [i, last_noun]; trailing adjectives fall outside it.
    if (last_noun != std::string::npos) {
      std::string phrase;
      for (size_t k = i; k <= last_noun; ++k) {
        if (tokens[k].tag != PosTag::Noun) continue;
        if (!phrase.empty()) phrase.push_back(' ');
        phrase += tokens[k].text;
      }
      if (!phrase.empty() && seen.insert(phrase).second) {
        out.phrases.push_back(std::move(phrase));
      }
    }
    i = j;
  }
  return out;
}

NounPhraseSet filter_generic(const NounPhraseSet& phrases, const ExclusionList& exclusion) {
  NounPhraseSet out;
  out.image_id = phrases.image_id;
  for (const auto& p : phrases.phrases) {
    if (!exclusion.excludes(p)) out.phrases.push_back(p);
  }
  return out;
}

// ============================================================
// Corpus mining
// ============================================================

namespace {

// Parses one input line into a record; throws InputError on malformed lines.
CaptionRecord parse_record(const std::string& line, bool jsonl) {
  CaptionRecord rec;
  if (jsonl) {
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw InputError("not a JSON object");
    if (!j.contains("image_id") || !j["image_id"].is_string()) {
      throw InputError("missing image_id");
    }
    rec.image_id = j["image_id"].get<std::string>();
    if (!j.contains("caption") || !j["caption"].is_string()) throw InputError("missing caption");
    rec.caption = j["caption"].get<std::string>();
    if (j.contains("tokens")) {
      if (!j["tokens"].is_array()) throw InputError("tokens must be an array");
      std::vector<PosToken> toks;
      for (const auto& t : j["tokens"]) {
        if (!t.is_array() || t.size() != 2 || !t[0].is_string() || !t[1].is_string()) {
          throw InputError("tokens entries must be [surface, tag] pairs");
        }
        toks.push_back(PosToken{t[0].get<std::string>(), pos_tag_from_name(t[1].get<std::string>())});
      }
      rec.tokens = std::move(toks);
    }
  } else {
    const size_t tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 >= line.size()) {
      throw InputError("expected image_id<TAB>caption");
    }
    rec.image_id = line.substr(0, tab);
    rec.caption = line.substr(tab + 1);
    if (!rec.caption.empty() && rec.caption.back() == '\r') rec.caption.pop_back();
  }
  if (rec.image_id.empty()) throw InputError("empty image_id");
  if (rec.caption.empty()) throw InputError("empty caption");
  return rec;
}

}  // namespace

MineCounts mine_corpus(const std::string& input_path, const ExclusionList& exclusion,
                       const std::string& output_path, const PosProvider& tagger) {
  std::ifstream in(input_path, std::ios::binary);
  if (!in) throw InputError("cannot open caption input: " + input_path);
  std::ofstream out(output_path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open mine output for writing: " + output_path);

  const bool jsonl = in.peek() == '{';

  MineCounts counts;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
    counts.read += 1;
    CaptionRecord rec;
    try {
      rec = parse_record(line, jsonl);
    } catch (const std::exception& e) {
      counts.skipped_malformed += 1;
      std::cerr << input_path << ":" << line_no << ": skipped: " << e.what() << "\n";
      continue;
    }
    NounPhraseSet kept = filter_generic(extract_noun_phrases(rec, tagger), exclusion);
    if (kept.phrases.empty()) {
      counts.skipped_empty += 1;
      continue;
    }
    ordered_json j;
    j["image_id"] = kept.image_id;
    j["categories"] = kept.phrases;
    out << j.dump() << "\n";
    counts.emitted += 1;
  }
  return counts;
}

}  // namespace synseg
