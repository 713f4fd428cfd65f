// SPDX-License-Identifier: Apache-2.0
#include <fstream>

#include <zlib.h>

#include "doctest.h"
#include "finetype/context.hpp"
#include "finetype/embedding.hpp"
#include "finetype/errors.hpp"
#include "finetype/wordpiece.hpp"
#include "support.hpp"

using namespace finetype;
using namespace finetype::testing;

namespace {
WordpieceVocab small_vocab() {
  return WordpieceVocab({"[UNK]", "[PAD]", "Johan", "##son", "John", "the", "un", "##aff", "##able", "é", "##té"});
}

WordpieceSeq plain_seq(const std::vector<std::string>& pieces) {
  WordpieceSeq s;
  for (std::size_t i = 0; i < pieces.size(); ++i) s.push(pieces[i], i);
  return s;
}
}  // namespace

TEST_CASE("wordpiece tokenizer") {
  const auto v = small_vocab();
  CHECK(wordpiece_tokenize("Johanson", v) == std::vector<std::string>{"Johan", "##son"});
  CHECK(wordpiece_tokenize("the", v) == std::vector<std::string>{"the"});
  CHECK(wordpiece_tokenize("xyzq", v) == std::vector<std::string>{"[UNK]"});
  CHECK(wordpiece_tokenize("unaffable", v) == std::vector<std::string>{"un", "##aff", "##able"});
  // An unmatched tail makes the whole word unknown.
  CHECK(wordpiece_tokenize("Johansonx", v) == std::vector<std::string>{"[UNK]"});
  CHECK(wordpiece_tokenize("été", v) == std::vector<std::string>{"é", "##té"});
  CHECK(wordpiece_tokenize("the", v, 2) == std::vector<std::string>{"[UNK]"});
  CHECK_THROWS_AS(wordpiece_tokenize("", v), DataError);
  CHECK_THROWS_AS(WordpieceVocab({"a", "b"}), ConfigError);
}

TEST_CASE("document tokenization tracks word positions") {
  const auto v = small_vocab();
  Document d{"d", {"Johanson", "the", "zzz"}, {}};
  const auto seq = tokenize_document(d, &v);
  CHECK(seq.pieces == std::vector<std::string>{"Johan", "##son", "the", "[UNK]"});
  CHECK(seq.word_index == std::vector<std::size_t>{0, 0, 1, 2});
  CHECK(seq.word_count() == 3);
  const auto plain = tokenize_document(d, nullptr);
  CHECK(plain.pieces == d.tokens);
  WordpieceSeq bad;
  bad.push("a", 1);
  CHECK_THROWS_AS(validate_wordpiece_seq(bad, "test"), DataError);
}

TEST_CASE("uniform provider") {
  UniformProvider u(8);
  const auto a = u.piece_vector("bank");
  CHECK(a == u.piece_vector("bank"));
  CHECK(a != u.piece_vector("river"));
  for (double x : a) {
    CHECK(x >= -0.1);
    CHECK(x < 0.1);
  }
  const auto e = u.embed(Document{"d", {"bank", "x", "bank"}, {}});
  CHECK(e.vectors.rows() == 3);
  for (std::size_t k = 0; k < 8; ++k) CHECK(e.vectors(0, k) == e.vectors(2, k));
  CHECK(UniformProvider(8).piece_vector("bank") == a);
  CHECK(UniformProvider(8, nullptr, 99).piece_vector("bank") != a);
}

TEST_CASE("word vector files") {
  const auto dir = temp_dir("glove");
  {
    std::ofstream(dir / "two.txt") << "the 0.1 0.2 0.3\ncat 1 2 3\n";
    const auto p = load_word_vectors(dir / "two.txt");
    CHECK(p->vocab_size() == 2);
    CHECK(p->dim() == 3);
  }
  {
    std::ofstream(dir / "the.txt") << "the 0.1 0.2\n";
    const auto p = load_word_vectors(dir / "the.txt");
    const auto e = p->embed(Document{"d", {"the", "the", "dog"}, {}});
    CHECK(e.vectors == Tensor::matrix({{0.1, 0.2}, {0.1, 0.2}, {0, 0}}));
  }
  {
    std::ofstream(dir / "ragged.txt") << "a 1 2 3\nb 1 2\n";
    try {
      load_word_vectors(dir / "ragged.txt");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find(":2:") != std::string::npos);
    }
  }
  {
    std::ofstream(dir / "dup.txt") << "a 1 2\na 3 4\n";
    WordVectorLoadReport rep;
    const auto p = load_word_vectors(dir / "dup.txt", &rep);
    CHECK(rep.duplicates.size() == 1);
    CHECK((*p->lookup("a"))[0] == 3);
  }
  CHECK_THROWS_AS(load_word_vectors(dir / "nope.txt"), DataError);
}

TEST_CASE("400k-line word vector file loads and answers lookups") {
  const auto dir = temp_dir("glove_big");
  const auto path = dir / "big.txt";
  {
    std::ofstream out(path);
    for (int i = 0; i < 400000; ++i) out << "w" << i << " " << (i % 97) * 0.01 << " -0.5 " << i * 1e-6 << "\n";
  }
  const auto p = load_word_vectors(path);
  CHECK(p->vocab_size() == 400000);
  CHECK(p->dim() == 3);
  REQUIRE(p->lookup("w399999"));
  CHECK((*p->lookup("w399999"))[2] == doctest::Approx(0.399999));
  CHECK((*p->lookup("w12345"))[0] == doctest::Approx(0.26));
  CHECK(p->lookup("w400000") == nullptr);
}

TEST_CASE("contextual store") {
  const auto dir = temp_dir("store");
  StoreRecord r;
  r.seq = plain_seq({"the", "bank", "by", "the", "bank"});
  r.vectors = Tensor::matrix({{0, 0}, {1, 0}, {0, 1}, {0, 0}, {0.2, 0.9}});
  write_contextual_store(dir / "s.jsonl", 2, {{"doc1", r}});
  const auto store = load_contextual_store(dir / "s.jsonl");
  CHECK(store->dim() == 2);
  CHECK(store->contains("doc1"));
  const Document doc{"doc1", {"the", "bank", "by", "the", "bank"}, {}};
  const auto e = store->embed(doc);
  CHECK(e.seq.pieces == r.seq.pieces);
  CHECK(e.vectors.row(1)[0] != e.vectors.row(4)[0]);
  CHECK(e.vectors == r.vectors);

  try {
    store->embed(Document{"missing-id", {"x"}, {}});
    FAIL("expected DataError");
  } catch (const DataError& err) {
    CHECK(std::string(err.what()).find("missing-id") != std::string::npos);
  }
  CHECK_THROWS_AS(store->embed(Document{"doc1", {"too", "short"}, {}}), DataError);

  SUBCASE("gzip-compressed store reads the same") {
    std::ifstream in(dir / "s.jsonl", std::ios::binary);
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    gzFile gz = gzopen((dir / "s.jsonl.gz").c_str(), "wb");
    gzwrite(gz, text.data(), static_cast<unsigned>(text.size()));
    gzclose(gz);
    CHECK(load_contextual_store(dir / "s.jsonl.gz")->embed(doc).vectors == r.vectors);
  }
  SUBCASE("malformed stores") {
    std::ofstream(dir / "nohead.jsonl") << R"({"doc_id":"a","pieces":["x"],"word_index":[0],"vectors":[[1,2]]})" << "\n";
    CHECK_THROWS_AS(load_contextual_store(dir / "nohead.jsonl"), ParseError);
    std::ofstream(dir / "ragged.jsonl") << R"({"format_version":1,"dim":2})" << "\n"
                                        << R"({"doc_id":"a","pieces":["x","y"],"word_index":[0],"vectors":[[1,2]]})"
                                        << "\n";
    CHECK_THROWS_AS(load_contextual_store(dir / "ragged.jsonl"), ParseError);
  }
}

TEST_CASE("provider spec strings") {
  CHECK(make_provider("uniform")->dim() == 300);
  CHECK(make_provider("uniform:12")->dim() == 12);
  CHECK(make_provider("uniform:12")->kind() == EmbeddingKind::uniform);
  CHECK_THROWS_AS(make_provider("uniform:zero"), ConfigError);
  CHECK_THROWS_AS(make_provider("bert"), ConfigError);
  CHECK_THROWS_AS(make_provider("vectors:"), ConfigError);
}

TEST_CASE("context windows") {
  const auto seq = plain_seq({"a", "b", "c", "M1", "M2", "d", "e"});
  using O = std::optional<std::size_t>;
  SUBCASE("worked example") {
    const auto w = context_windows(seq, 3, 5, 3);
    CHECK(w.left == std::vector<O>{0, 1, 2});
    CHECK(w.right == std::vector<O>{5, 6, std::nullopt});
    CHECK(w.mention == std::vector<O>{3, 4, std::nullopt});
  }
  SUBCASE("mention at sentence start") {
    const auto w = context_windows(seq, 0, 1, 3);
    CHECK(w.left == std::vector<O>{std::nullopt, std::nullopt, std::nullopt});
    Tensor emb({7, 2}, 1.0);
    const auto t = build_context_triple(seq, emb, 0, 1, 3);
    CHECK(t.left == std::vector<double>{0.0, 0.0});
    CHECK(t.mention == std::vector<double>{1.0, 1.0});
  }
  SUBCASE("four-piece mention is trimmed to the window") {
    const auto w = context_windows(seq, 1, 5, 3);
    CHECK(w.mention == std::vector<O>{1, 2, 3});
  }
  SUBCASE("averages skip padding") {
    const auto emb = Tensor::matrix({{1, 0}, {2, 0}, {3, 0}, {4, 4}, {6, 8}, {10, 1}, {20, 3}});
    const auto t = build_context_triple(seq, emb, 3, 5, 3);
    CHECK(t.left == std::vector<double>{2.0, 0.0});
    CHECK(t.right == std::vector<double>{15.0, 2.0});
    CHECK(t.mention == std::vector<double>{5.0, 6.0});
  }
  SUBCASE("multi-piece words use the mention's pieces") {
    WordpieceSeq s;
    s.push("x", 0);
    s.push("Johan", 1);
    s.push("##son", 1);
    s.push("y", 2);
    const auto w = context_windows(s, 1, 2, 2);
    CHECK(w.left == std::vector<O>{std::nullopt, 0});
    CHECK(w.mention == std::vector<O>{1, 2});
    CHECK(w.right == std::vector<O>{3, std::nullopt});
  }
  CHECK_THROWS_AS(context_windows(seq, 5, 8, 3), DataError);
  CHECK_THROWS_AS(context_windows(seq, 2, 2, 3), DataError);
}
