#include <filesystem>

#include <unistd.h>

#include <gtest/gtest.h>

#include "hyperdet/io.hpp"
#include "hyperdet/manifest.hpp"

namespace hyperdet {
namespace {

namespace fs = std::filesystem;

fs::path temp_dir() {
  const fs::path d = fs::temp_directory_path() / ("hyperdet_io_" + std::to_string(::getpid()));
  fs::create_directories(d);
  return d;
}

TEST(EmbeddingText, ParsesNamesAndRows) {
  const EmbeddingTable t = parse_embedding_text("# comment\ncat 1 2\n\ndog -0.5 3e-1\n");
  EXPECT_EQ(t.names, (std::vector<std::string>{"cat", "dog"}));
  EXPECT_EQ(t.rows[1], (Vector{-0.5, 0.3}));
}

TEST(EmbeddingText, Rejections) {
  EXPECT_THROW(parse_embedding_text("cat 1 2\ncat 3 4\n"), ConfigError);
  EXPECT_THROW(parse_embedding_text("cat 1 2\ndog 3\n"), ConfigError);
  EXPECT_THROW(parse_embedding_text("cat 1 2\n"), ConfigError);
  EXPECT_THROW(parse_embedding_text("cat 1 x\ndog 1 2\n"), ConfigError);
  EXPECT_THROW(parse_embedding_text("cat 1 nan\ndog 1 2\n"), ConfigError);
  EXPECT_THROW(parse_embedding_text("cat\ndog 1 2\n"), ConfigError);
}

TEST(ImportPrototypes, AntipodalPairHasDMinTwo) {
  const PrototypeBank b = import_prototypes(parse_embedding_text("a 1 0\nb -1 0\n"), HeadMode::hyperbolic);
  EXPECT_TRUE(b.frozen());
  EXPECT_NEAR(b.d_min(), 2.0, 1e-14);
}

TEST(ImportPrototypes, AlreadyHyperbolicCoordinates) {
  const double c = std::cosh(1.0), s = std::sinh(1.0);
  std::ostringstream os;
  os.precision(17);
  os << "a " << c << ' ' << s << " 0\nb " << c << ' ' << -s << " 0\n";
  const PrototypeBank b = import_prototypes(parse_embedding_text(os.str()), HeadMode::hyperbolic, true);
  EXPECT_NEAR(b.d_min(), 2.0, 1e-14);
  // Off the manifold.
  EXPECT_THROW(import_prototypes(parse_embedding_text("a 1 1 0\nb 1 0 1\n"), HeadMode::hyperbolic, true), ConfigError);
  EXPECT_THROW(import_prototypes(parse_embedding_text("a 1 0\nb 0 1\n"), HeadMode::euclidean_linear, true), ConfigError);
  // Coincident prototypes leave no positive d_min.
  EXPECT_THROW(import_prototypes(parse_embedding_text("a 1 0\nb 1 0\n"), HeadMode::hyperbolic), ConfigError);
}

TEST(ImportPrototypes, ExportReimportIsIdentical) {
  const std::string text = "a 0.3 -0.1 0.7\nb -1.2 0.4 0.05\nc 0.0 2.5 -0.3\n";
  for (HeadMode m : {HeadMode::hyperbolic, HeadMode::euclidean_linear, HeadMode::euclidean_cosine}) {
    const PrototypeBank b = import_prototypes(parse_embedding_text(text), m);
    const PrototypeBank again =
        import_prototypes(parse_embedding_text(export_prototypes(b)), m, m == HeadMode::hyperbolic);
    EXPECT_EQ(bank_to_json(again).dump(), bank_to_json(b).dump()) << to_string(m);
  }
}

TEST(Sha256, KnownVectors) {
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(RunManifest, WrittenBeforeAndFinalizedAfter) {
  const fs::path dir = temp_dir();
  const std::string in = (dir / "in.txt").string(), out = (dir / "out.txt").string(), mpath = (dir / "m.json").string();
  write_file(in, "abc");
  RunManifest m(mpath, "generate", {"hyperdet", "generate"});
  m.set_config({{"x", 1}});
  m.set_seed(7);
  m.add_input(in);
  m.add_output(out);
  m.begin();
  const auto before = read_json(mpath);
  EXPECT_EQ(before["status"], "running");
  EXPECT_TRUE(before["exit_code"].is_null());
  EXPECT_EQ(before["inputs"][0]["sha256"], sha256_hex("abc"));
  write_file(out, "result");
  m.finish(0);
  const auto after = read_json(mpath);
  EXPECT_EQ(after["status"], "ok");
  EXPECT_EQ(after["exit_code"], 0);
  EXPECT_EQ(after["seed"], 7);
  EXPECT_EQ(after["outputs"][0]["sha256"], file_sha256(out));
  EXPECT_EQ(after["tool_version"], HYPERDET_VERSION);
  fs::remove_all(dir);
}

TEST(Files, MissingAndMalformed) {
  EXPECT_THROW(read_file("/nonexistent/file"), ConfigError);
  const fs::path dir = temp_dir();
  const std::string p = (dir / "bad.json").string();
  write_file(p, "{ not json");
  EXPECT_THROW(read_json(p), ConfigError);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace hyperdet
