// SPDX-License-Identifier: Apache-2.0
#include "finetype/embedding.hpp"

#include <zlib.h>

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "finetype/errors.hpp"
#include "finetype/rng.hpp"

namespace finetype {

using nlohmann::json;

std::string to_string(EmbeddingKind kind) {
  switch (kind) {
    case EmbeddingKind::uniform: return "uniform";
    case EmbeddingKind::word_vectors: return "vectors";
    case EmbeddingKind::contextual_store: return "contextual";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Uniform
// ---------------------------------------------------------------------------

UniformProvider::UniformProvider(std::size_t dim, std::shared_ptr<const WordpieceVocab> vocab,
                                 std::uint64_t salt, std::string vocab_path)
    : dim_(dim), vocab_(std::move(vocab)), salt_(salt), vocab_path_(std::move(vocab_path)) {
  if (dim_ == 0) throw ConfigError("uniform embedding dimension must be positive");
}

std::vector<double> UniformProvider::piece_vector(const std::string& piece) const {
  Rng rng(fnv1a64(piece) ^ salt_);
  std::vector<double> v(dim_);
  for (auto& x : v) x = rng.uniform(-0.1, 0.1);
  return v;
}

EmbeddedSequence UniformProvider::embed(const Document& doc) const {
  EmbeddedSequence out{tokenize_document(doc, vocab_.get()), {}};
  out.vectors = Tensor({out.seq.size(), dim_});
  for (std::size_t i = 0; i < out.seq.size(); ++i) {
    const auto v = piece_vector(out.seq.pieces[i]);
    std::copy(v.begin(), v.end(), out.vectors.row(i).begin());
  }
  return out;
}

std::string UniformProvider::describe() const {
  std::string s = "uniform:" + std::to_string(dim_);
  if (!vocab_path_.empty()) s += ":" + vocab_path_;
  return s;
}

// ---------------------------------------------------------------------------
// Word vectors
// ---------------------------------------------------------------------------

WordVectorProvider::WordVectorProvider(std::size_t dim,
                                       std::unordered_map<std::string, std::vector<double>> table,
                                       std::string source)
    : dim_(dim), table_(std::move(table)), source_(std::move(source)) {
  if (dim_ == 0) throw ConfigError("word vector dimension must be positive");
}

const std::vector<double>* WordVectorProvider::lookup(const std::string& token) const {
  auto it = table_.find(token);
  return it == table_.end() ? nullptr : &it->second;
}

EmbeddedSequence WordVectorProvider::embed(const Document& doc) const {
  EmbeddedSequence out{tokenize_document(doc, nullptr), {}};
  out.vectors = Tensor({out.seq.size(), dim_});
  for (std::size_t i = 0; i < out.seq.size(); ++i) {
    if (const auto* v = lookup(out.seq.pieces[i])) {
      std::copy(v->begin(), v->end(), out.vectors.row(i).begin());
    }
  }
  return out;
}

std::string WordVectorProvider::describe() const { return "vectors:" + source_; }

std::unique_ptr<WordVectorProvider> load_word_vectors(const std::filesystem::path& path,
                                                      WordVectorLoadReport* report) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open word vector file " + path.string());
  const std::string origin = path.string();
  std::unordered_map<std::string, std::vector<double>> table;
  WordVectorLoadReport local;
  std::size_t dim = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(' ') == std::string::npos) continue;
    const char* p = line.data();
    const char* end = p + line.size();
    while (p < end && *p == ' ') ++p;
    const char* tok_end = p;
    while (tok_end < end && *tok_end != ' ' && *tok_end != '\t') ++tok_end;
    std::string token(p, tok_end);
    std::vector<double> values;
    values.reserve(dim ? dim : 64);
    p = tok_end;
    while (p < end) {
      while (p < end && (*p == ' ' || *p == '\t')) ++p;
      if (p == end) break;
      char* next = nullptr;
      const double v = std::strtod(p, &next);
      if (next == p) throw ParseError(origin, line_no, "non-numeric vector component");
      values.push_back(v);
      p = next;
    }
    if (dim == 0) {
      if (values.empty()) throw ParseError(origin, line_no, "line has no vector components");
      dim = values.size();
    } else if (values.size() != dim) {
      throw ParseError(origin, line_no,
                       "expected " + std::to_string(dim) + " components, got " +
                           std::to_string(values.size()));
    }
    ++local.lines;
    auto [it, inserted] = table.insert_or_assign(std::move(token), std::move(values));
    if (!inserted) {
      local.duplicates.push_back(it->first);
      std::cerr << "warning: " << origin << ":" << line_no << ": duplicate token '" << it->first
                << "', keeping the last row\n";
    }
  }
  if (dim == 0) throw DataError("word vector file " + origin + " is empty");
  if (report) *report = std::move(local);
  return std::make_unique<WordVectorProvider>(dim, std::move(table), origin);
}

// ---------------------------------------------------------------------------
// Contextual store
// ---------------------------------------------------------------------------

ContextualStore::ContextualStore(std::size_t dim,
                                 std::unordered_map<std::string, StoreRecord> records,
                                 std::string source)
    : dim_(dim), records_(std::move(records)), source_(std::move(source)) {}

EmbeddedSequence ContextualStore::embed(const Document& doc) const {
  auto it = records_.find(doc.doc_id);
  if (it == records_.end()) {
    throw DataError("contextual store " + source_ + " has no record for document id '" +
                    doc.doc_id + "'");
  }
  const auto& rec = it->second;
  if (rec.seq.word_count() != doc.tokens.size()) {
    throw DataError("contextual store record '" + doc.doc_id + "' covers " +
                    std::to_string(rec.seq.word_count()) + " words, document has " +
                    std::to_string(doc.tokens.size()));
  }
  return {rec.seq, rec.vectors};
}

std::string ContextualStore::describe() const { return "contextual:" + source_; }

namespace {

std::string read_maybe_gzipped(const std::filesystem::path& path) {
  // gzread passes uncompressed input through unchanged.
  gzFile f = gzopen(path.string().c_str(), "rb");
  if (!f) throw DataError("cannot open contextual store " + path.string());
  std::string out;
  char buf[1 << 16];
  int n;
  while ((n = gzread(f, buf, sizeof buf)) > 0) out.append(buf, static_cast<std::size_t>(n));
  const bool failed = n < 0;
  gzclose(f);
  if (failed) throw DataError("error decompressing contextual store " + path.string());
  return out;
}

}  // namespace

std::unique_ptr<ContextualStore> load_contextual_store(const std::filesystem::path& path) {
  const std::string origin = path.string();
  std::istringstream in(read_maybe_gzipped(path));
  std::string line;
  std::size_t line_no = 0;
  std::size_t dim = 0;
  bool have_header = false;
  std::unordered_map<std::string, StoreRecord> records;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(origin, line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!have_header) {
      if (!j.contains("format_version") || !j.contains("dim")) {
        throw ParseError(origin, line_no, "first record must be the {format_version, dim} header");
      }
      if (j["format_version"].get<int>() != kContextualStoreVersion) {
        throw ParseError(origin, line_no, "unsupported store format_version");
      }
      dim = j["dim"].get<std::size_t>();
      if (dim == 0) throw ParseError(origin, line_no, "dim must be positive");
      have_header = true;
      continue;
    }
    try {
      StoreRecord rec;
      const auto doc_id = j.at("doc_id").get<std::string>();
      const auto pieces = j.at("pieces").get<std::vector<std::string>>();
      const auto words = j.at("word_index").get<std::vector<std::size_t>>();
      const auto& vecs = j.at("vectors");
      if (pieces.size() != words.size() || vecs.size() != pieces.size()) {
        throw ParseError(origin, line_no, "pieces, word_index and vectors differ in length");
      }
      if (pieces.empty()) throw ParseError(origin, line_no, "record has no pieces");
      rec.vectors = Tensor({pieces.size(), dim});
      for (std::size_t i = 0; i < pieces.size(); ++i) {
        rec.seq.push(pieces[i], words[i]);
        const auto& v = vecs[i];
        if (!v.is_array() || v.size() != dim) {
          throw ParseError(origin, line_no, "vector " + std::to_string(i) + " is not of dim " +
                                                std::to_string(dim));
        }
        for (std::size_t k = 0; k < dim; ++k) rec.vectors(i, k) = v[k].get<double>();
      }
      validate_wordpiece_seq(rec.seq, origin + ":" + std::to_string(line_no));
      if (!records.emplace(doc_id, std::move(rec)).second) {
        throw ParseError(origin, line_no, "duplicate doc_id '" + doc_id + "'");
      }
    } catch (const json::exception& e) {
      throw ParseError(origin, line_no, std::string("malformed store record: ") + e.what());
    }
  }
  if (!have_header) throw DataError("contextual store " + origin + " has no header record");
  return std::make_unique<ContextualStore>(dim, std::move(records), origin);
}

void write_contextual_store(const std::filesystem::path& path, std::size_t dim,
                            const std::vector<std::pair<std::string, StoreRecord>>& records) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write contextual store " + path.string());
  out << json{{"format_version", kContextualStoreVersion}, {"dim", dim}}.dump() << '\n';
  for (const auto& [id, rec] : records) {
    json vectors = json::array();
    for (std::size_t i = 0; i < rec.seq.size(); ++i) {
      const auto row = rec.vectors.row(i);
      vectors.push_back(std::vector<double>(row.begin(), row.end()));
    }
    out << json{{"doc_id", id},
                {"pieces", rec.seq.pieces},
                {"word_index", rec.seq.word_index},
                {"vectors", vectors}}
               .dump()
        << '\n';
  }
}

// ---------------------------------------------------------------------------

std::unique_ptr<EmbeddingProvider> make_provider(const std::string& spec, std::size_t default_dim) {
  const auto colon = spec.find(':');
  const std::string kind = spec.substr(0, colon);
  const std::string rest = colon == std::string::npos ? "" : spec.substr(colon + 1);
  if (kind == "uniform") {
    std::size_t dim = default_dim;
    std::string vocab_path;
    if (!rest.empty()) {
      const auto c2 = rest.find(':');
      const std::string dim_str = rest.substr(0, c2);
      auto [ptr, ec] = std::from_chars(dim_str.data(), dim_str.data() + dim_str.size(), dim);
      if (ec != std::errc() || ptr != dim_str.data() + dim_str.size()) {
        throw ConfigError("bad uniform embedding dimension in '" + spec + "'");
      }
      if (c2 != std::string::npos) vocab_path = rest.substr(c2 + 1);
    }
    std::shared_ptr<const WordpieceVocab> vocab;
    if (!vocab_path.empty()) vocab = std::make_shared<WordpieceVocab>(WordpieceVocab::load(vocab_path));
    return std::make_unique<UniformProvider>(dim, std::move(vocab), 0, vocab_path);
  }
  if (kind == "vectors" || kind == "glove" || kind == "word2vec") {
    if (rest.empty()) throw ConfigError("embedding spec '" + spec + "' needs a file path");
    return load_word_vectors(rest);
  }
  if (kind == "contextual") {
    if (rest.empty()) throw ConfigError("embedding spec '" + spec + "' needs a store path");
    return load_contextual_store(rest);
  }
  throw ConfigError("unknown embedding kind '" + kind + "' (expected uniform, vectors, contextual)");
}

}  // namespace finetype
