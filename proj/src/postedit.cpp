#include "ugclab/postedit.hpp"

#include <algorithm>

#include "ugclab/errors.hpp"
#include "ugclab/utf8.hpp"

namespace ugclab {

Unit parse_unit(std::string_view name) {
  if (name == "token" || name == "tokens") return Unit::kToken;
  if (name == "char" || name == "character" || name == "characters") return Unit::kCharacter;
  throw ConfigError("unknown unit '" + std::string(name) + "' (expected token or char)");
}

Sentence char_sentence(std::u32string chars) {
  Sentence s;
  s.raw = utf8::encode(chars);
  s.tokens = tokenize(s.raw, TokenizerScheme::kWhitespace);
  s.chars = std::move(chars);
  return s;
}

TranslationRecord TranslationRecord::make(std::size_t id, Sentence source, Sentence reference, Sentence hypothesis,
                                          Unit unit) {
  TranslationRecord r;
  r.id = id;
  r.edit_distance = unit == Unit::kToken ? ugclab::edit_distance(hypothesis.tokens, reference.tokens).normalized
                                         : char_edit_distance(hypothesis.chars, reference.chars).normalized;
  r.source = std::move(source);
  r.reference = std::move(reference);
  r.hypothesis = std::move(hypothesis);
  return r;
}

ReplacementPolicy ReplacementPolicy::characters() {
  ReplacementPolicy p;
  p.unit = Unit::kCharacter;
  p.marker = utf8::encode(char32_t{0xFFFD});
  return p;
}

ReplacementPolicy ReplacementPolicy::tokens(std::string marker) {
  ReplacementPolicy p;
  p.marker = std::move(marker);
  return p;
}

void ReplacementPolicy::validate() const {
  if (marker.empty()) throw ConfigError("UNK marker must not be empty");
  if (unit == Unit::kCharacter && utf8::decode(marker).size() != 1) {
    throw ConfigError("character-unit UNK marker must be a single character");
  }
}

namespace {

char32_t marker_char(const ReplacementPolicy& policy) { return utf8::decode(policy.marker).front(); }

void check_alignment(const Alignment& alignment, std::size_t hyp_units, std::size_t src_units) {
  if (alignment.size() != hyp_units) {
    throw DataError("alignment covers " + std::to_string(alignment.size()) + " units but the hypothesis has " +
                    std::to_string(hyp_units));
  }
  for (const auto& link : alignment.links) {
    if (link && *link >= src_units) {
      throw DataError("alignment links to source unit " + std::to_string(*link) + " of " +
                      std::to_string(src_units));
    }
  }
}

}  // namespace

Sentence unk_replace(const Sentence& hypothesis, const Sentence& source, const Alignment& alignment,
                     const ReplacementPolicy& policy) {
  policy.validate();
  const bool keep = policy.on_null == ReplacementPolicy::OnNull::kKeepMarker;
  if (policy.unit == Unit::kToken) {
    check_alignment(alignment, hypothesis.tokens.size(), source.tokens.size());
    std::vector<std::string> out;
    out.reserve(hypothesis.tokens.size());
    for (std::size_t j = 0; j < hypothesis.tokens.size(); ++j) {
      const auto& tok = hypothesis.tokens[j];
      if (tok != policy.marker) {
        out.push_back(tok);
      } else if (alignment.links[j]) {
        out.push_back(source.tokens[*alignment.links[j]]);
      } else if (keep) {
        out.push_back(tok);
      }
    }
    return Sentence::from_tokens(std::move(out));
  }
  check_alignment(alignment, hypothesis.chars.size(), source.chars.size());
  const char32_t unk = marker_char(policy);
  std::u32string out;
  out.reserve(hypothesis.chars.size());
  for (std::size_t j = 0; j < hypothesis.chars.size(); ++j) {
    const char32_t c = hypothesis.chars[j];
    if (c != unk) {
      out.push_back(c);
    } else if (alignment.links[j]) {
      out.push_back(source.chars[*alignment.links[j]]);
    } else if (keep) {
      out.push_back(c);
    }
  }
  return char_sentence(std::move(out));
}

std::size_t count_unk(const Sentence& sentence, const ReplacementPolicy& policy) {
  if (policy.unit == Unit::kToken) {
    return static_cast<std::size_t>(std::count(sentence.tokens.begin(), sentence.tokens.end(), policy.marker));
  }
  return static_cast<std::size_t>(std::count(sentence.chars.begin(), sentence.chars.end(), marker_char(policy)));
}

AlignSource parse_align_source(std::string_view name) {
  if (name == "identity") return AlignSource::kIdentity;
  if (name == "attention" || name == "attn") return AlignSource::kAttention;
  if (name == "model" || name == "table") return AlignSource::kModel;
  if (name == "provided" || name == "pharaoh") return AlignSource::kProvided;
  throw ConfigError("unknown alignment source '" + std::string(name) + "'");
}

Alignment align_record(const TranslationRecord& record, const AlignerChoice& choice, std::size_t index, Unit unit) {
  const std::size_t hyp_units = unit == Unit::kToken ? record.hypothesis.tokens.size() : record.hypothesis.chars.size();
  const std::size_t src_units = unit == Unit::kToken ? record.source.tokens.size() : record.source.chars.size();
  switch (choice.source) {
    case AlignSource::kIdentity: {
      Alignment a;
      a.links.resize(hyp_units);
      for (std::size_t j = 0; j < hyp_units && j < src_units; ++j) a.links[j] = j;
      return a;
    }
    case AlignSource::kAttention: {
      if (!record.attention) throw DataError("record " + std::to_string(record.id) + " has no attention matrix");
      const auto cols = static_cast<std::size_t>(record.attention->cols());
      if (cols != src_units + 1) {
        throw DataError("attention of record " + std::to_string(record.id) + " has " + std::to_string(cols) +
                        " columns, expected " + std::to_string(src_units + 1));
      }
      return attention_align(*record.attention, {cols - 1});
    }
    case AlignSource::kModel:
      if (!choice.model) throw ConfigError("model alignment requested without a trained aligner");
      if (unit != Unit::kToken) throw ConfigError("aligner model works on token units");
      return viterbi_align(*choice.model, record.source, record.hypothesis);
    case AlignSource::kProvided:
      if (!choice.provided || index >= choice.provided->size()) {
        throw DataError("no alignment supplied for record " + std::to_string(record.id));
      }
      return (*choice.provided)[index];
  }
  throw ConfigError("invalid alignment source");
}

BleuScore unit_bleu(const std::vector<Sentence>& hypotheses, const std::vector<Sentence>& references, Unit unit,
                    BleuSmoothing smoothing) {
  if (unit == Unit::kToken) {
    std::vector<TokenSeq> h, r;
    h.reserve(hypotheses.size());
    r.reserve(references.size());
    for (const auto& s : hypotheses) h.push_back(s.tokens);
    for (const auto& s : references) r.push_back(s.tokens);
    return bleu(h, r, smoothing);
  }
  std::vector<std::u32string> h, r;
  h.reserve(hypotheses.size());
  r.reserve(references.size());
  for (const auto& s : hypotheses) h.push_back(s.chars);
  for (const auto& s : references) r.push_back(s.chars);
  return char_bleu(h, r, smoothing);
}

BeforeAfter evaluate_before_after(const std::vector<TranslationRecord>& records, const AlignerChoice& choice,
                                  const ReplacementPolicy& policy, BleuSmoothing smoothing) {
  policy.validate();
  BeforeAfter out;
  std::vector<Sentence> hyps, refs;
  hyps.reserve(records.size());
  refs.reserve(records.size());
  out.replaced_hypotheses.reserve(records.size());
  std::size_t units = 0, unks = 0;
  for (std::size_t k = 0; k < records.size(); ++k) {
    const auto& r = records[k];
    hyps.push_back(r.hypothesis);
    refs.push_back(r.reference);
    const std::size_t n_unk = count_unk(r.hypothesis, policy);
    units += policy.unit == Unit::kToken ? r.hypothesis.tokens.size() : r.hypothesis.chars.size();
    unks += n_unk;
    if (n_unk == 0) {
      out.replaced_hypotheses.push_back(r.hypothesis);
      continue;
    }
    const Alignment a = align_record(r, choice, k, policy.unit);
    Sentence fixed = unk_replace(r.hypothesis, r.source, a, policy);
    out.replaced += n_unk - count_unk(fixed, policy);
    out.replaced_hypotheses.push_back(std::move(fixed));
  }
  out.before = unit_bleu(hyps, refs, policy.unit, smoothing);
  out.after = unit_bleu(out.replaced_hypotheses, refs, policy.unit, smoothing);
  out.unk_pct = units == 0 ? 0.0 : 100.0 * static_cast<double>(unks) / static_cast<double>(units);
  return out;
}

}  // namespace ugclab
