// SPDX-License-Identifier: Apache-2.0
#include "finetype/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <json.hpp>

#include "finetype/errors.hpp"

namespace finetype {

using nlohmann::json;

namespace {

Document parse_record(const json& j, const std::string& stem, std::size_t line) {
  auto fail = [&](const std::string& what) -> ParseError { return ParseError(stem, line, what); };
  if (!j.is_object()) throw fail("record is not a JSON object");
  Document doc;
  if (auto it = j.find("doc_id"); it != j.end() && !it->is_null()) {
    doc.doc_id = it->is_string() ? it->get<std::string>() : it->dump();
  } else {
    doc.doc_id = stem + "-" + std::to_string(line);
  }
  const auto tokens = j.find("tokens");
  if (tokens == j.end() || !tokens->is_array()) throw fail("missing 'tokens' array");
  for (const auto& t : *tokens) {
    if (!t.is_string()) throw fail("token is not a string");
    doc.tokens.push_back(t.get<std::string>());
  }
  if (doc.tokens.empty()) throw fail("document has no tokens");
  if (auto ms = j.find("mentions"); ms != j.end() && !ms->is_null()) {
    if (!ms->is_array()) throw fail("'mentions' is not an array");
    for (const auto& m : *ms) {
      if (!m.is_object() || !m.contains("start") || !m.contains("end") || !m.contains("labels")) {
        throw fail("mention needs start, end and labels");
      }
      if (!m["start"].is_number_integer() || !m["end"].is_number_integer()) {
        throw fail("mention start/end must be integers");
      }
      const auto start = m["start"].get<long long>();
      const auto end = m["end"].get<long long>();
      if (start < 0 || end <= start || end > static_cast<long long>(doc.tokens.size())) {
        throw fail("mention span [" + std::to_string(start) + ", " + std::to_string(end) +
                   ") is empty or outside " + std::to_string(doc.tokens.size()) + " tokens");
      }
      Mention mention{static_cast<std::size_t>(start), static_cast<std::size_t>(end), {}};
      if (!m["labels"].is_array()) throw fail("mention labels must be an array");
      for (const auto& l : m["labels"]) {
        if (!l.is_string()) throw fail("label is not a string");
        auto label = l.get<std::string>();
        if (label.empty() || label.front() != '/') throw fail("label '" + label + "' does not start with '/'");
        if (std::find(mention.labels.begin(), mention.labels.end(), label) == mention.labels.end()) {
          mention.labels.push_back(std::move(label));
        }
      }
      if (mention.labels.empty()) throw fail("mention has no labels");
      doc.mentions.push_back(std::move(mention));
    }
  }
  return doc;
}

bool has_overlap(const Document& doc) {
  for (std::size_t a = 0; a < doc.mentions.size(); ++a) {
    for (std::size_t b = a + 1; b < doc.mentions.size(); ++b) {
      const auto& x = doc.mentions[a];
      const auto& y = doc.mentions[b];
      if (x.start < y.end && y.start < x.end) return true;
    }
  }
  return false;
}

}  // namespace

Corpus parse_corpus(std::istream& in, const std::string& stem, LoadReport* report) {
  Corpus corpus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(stem, line_no, std::string("invalid JSON: ") + e.what());
    }
    corpus.push_back(parse_record(j, stem, line_no));
  }
  if (report) {
    *report = {};
    report->documents = corpus.size();
    for (const auto& d : corpus) {
      report->mentions += d.mentions.size();
      if (has_overlap(d)) report->overlapping_docs.push_back(d.doc_id);
    }
  }
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& path, LoadReport* report) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus file " + path.string());
  return parse_corpus(in, path.stem().string(), report);
}

void write_corpus(std::ostream& out, const Corpus& corpus) {
  for (const auto& doc : corpus) {
    json j;
    j["doc_id"] = doc.doc_id;
    j["tokens"] = doc.tokens;
    j["mentions"] = json::array();
    for (const auto& m : doc.mentions) {
      j["mentions"].push_back({{"start", m.start}, {"end", m.end}, {"labels", m.labels}});
    }
    out << j.dump() << '\n';
  }
}

void write_corpus(const std::filesystem::path& path, const Corpus& corpus) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write corpus file " + path.string());
  write_corpus(out, corpus);
}

LabelVocab::LabelVocab(std::vector<std::string> labels) : labels_(std::move(labels)) {
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (!index_.emplace(labels_[i], i).second) throw DataError("duplicate label " + labels_[i]);
  }
}

LabelVocab LabelVocab::from_corpus(const Corpus& corpus) {
  // Sorted for an order that does not depend on corpus order.
  std::set<std::string> seen;
  for (const auto& d : corpus) {
    for (const auto& m : d.mentions) seen.insert(m.labels.begin(), m.labels.end());
  }
  return LabelVocab(std::vector<std::string>(seen.begin(), seen.end()));
}

std::optional<std::size_t> LabelVocab::find(const std::string& label) const {
  auto it = index_.find(label);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

SplitSizes modified_split_sizes(std::size_t n) {
  if (n < 3) throw DataError("modified split needs at least 3 documents, got " + std::to_string(n));
  const std::size_t tenth = (n + 9) / 10;
  return {n - 2 * tenth, tenth, tenth};
}

SplitSpec make_modified_split(const Corpus& corpus_test, SplitKind kind, const Corpus* aux) {
  SplitSpec split;
  split.provenance = SplitSpec::Provenance::modified;
  if (kind == SplitKind::m_ontonotes_like) {
    const auto sizes = modified_split_sizes(corpus_test.size());
    auto it = corpus_test.begin();
    split.train.assign(it, it + sizes.train);
    it += sizes.train;
    split.dev.assign(it, it + sizes.dev);
    it += sizes.dev;
    split.test.assign(it, corpus_test.end());
    return split;
  }
  if (!aux) throw DataError("m_wiki_like split needs the original training corpus");
  if (corpus_test.size() < 1 || aux->size() < 2) {
    throw DataError("m_wiki_like split needs a nonempty test corpus and at least 2 training documents");
  }
  const std::size_t n_train = std::min(kWikiTrainDocs, aux->size() - 1);
  const std::size_t n_dev = std::min(kWikiDevDocs, aux->size() - n_train);
  split.train.assign(aux->begin(), aux->begin() + n_train);
  split.dev.assign(aux->begin() + n_train, aux->begin() + n_train + n_dev);
  split.test = corpus_test;
  return split;
}

std::vector<MentionRef> extract_mention_examples(const Corpus& split) {
  std::vector<MentionRef> out;
  for (const auto& doc : split) {
    for (std::size_t i = 0; i < doc.mentions.size(); ++i) out.push_back({&doc, i});
  }
  return out;
}

Tensor token_label_matrix(const Document& doc, const LabelVocab& vocab, OovCounter* oov) {
  if (vocab.size() == 0) throw DataError("token_label_matrix: empty label vocabulary");
  Tensor m({doc.tokens.size(), vocab.size()});
  for (const auto& mention : doc.mentions) {
    for (const auto& label : mention.labels) {
      const auto idx = vocab.find(label);
      if (!idx) {
        if (oov) oov->add(label);
        continue;
      }
      for (std::size_t t = mention.start; t < mention.end; ++t) m(t, *idx) = 1.0;
    }
  }
  return m;
}

CorpusStats corpus_stats(const Corpus& corpus) {
  CorpusStats s;
  std::set<std::string> labels;
  s.documents = corpus.size();
  for (const auto& d : corpus) {
    s.mentions += d.mentions.size();
    s.tokens += d.tokens.size();
    std::vector<bool> entity(d.tokens.size(), false);
    for (const auto& m : d.mentions) {
      for (std::size_t t = m.start; t < m.end; ++t) entity[t] = true;
      labels.insert(m.labels.begin(), m.labels.end());
    }
    s.entity_tokens += static_cast<std::size_t>(std::count(entity.begin(), entity.end(), true));
    if (has_overlap(d)) ++s.overlapping_docs;
  }
  s.distinct_labels = labels.size();
  return s;
}

}  // namespace finetype
