#include <gtest/gtest.h>

#include <random>

#include "common/error.hpp"
#include "common/fsutil.hpp"
#include "lifecycle/archive.hpp"
#include "support/test_env.hpp"

namespace dbm::lifecycle {
namespace {

using testing::hash_tree;
using testing::make_random_tree;
using testing::put_file;
using testing::run_process;

class ArchiveTest : public ::testing::Test {
 protected:
  fsutil::TempDir tmp{"dbm-archive"};
  fs::path p(const std::string& rel) const { return tmp.path() / rel; }
};

TEST_F(ArchiveTest, RoundTripsThroughOwnExtractor) {
  std::mt19937_64 rng(21);
  make_random_tree(p("src"), rng, {.max_files = 80});
  auto size = write_archive(p("src"), p("a.tar"));
  EXPECT_EQ(size, fs::file_size(p("a.tar")));
  EXPECT_EQ(size % 512, 0u);
  extract_archive(p("a.tar"), p("out"));
  EXPECT_EQ(hash_tree(p("out")), hash_tree(p("src")));
}

TEST_F(ArchiveTest, GnuTarReadsOurArchives) {
  std::mt19937_64 rng(22);
  make_random_tree(p("src"), rng, {.max_files = 60});
  // Long path to force a pax extended header.
  auto deep = p("src") / std::string(60, 'a') / std::string(60, 'b');
  put_file(deep / "long-file-name.bin", "payload");
  write_archive(p("src"), p("a.tar"));
  fs::create_directories(p("gnu"));
  auto r = run_process({"/bin/tar", "-xpf", p("a.tar").string(), "-C", p("gnu").string()});
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_EQ(hash_tree(p("gnu")), hash_tree(p("src")));
}

TEST_F(ArchiveTest, ReadsGnuTarPaxArchives) {
  std::mt19937_64 rng(23);
  make_random_tree(p("src"), rng, {.max_files = 60});
  put_file(p("src") / std::string(120, 'n') / "x", "deep");
  auto r = run_process({"/bin/tar", "--format=pax", "-cf", p("g.tar").string(), "-C",
                        p("src").string(), "."});
  ASSERT_EQ(r.exit_code, 0) << r.err;
  extract_archive(p("g.tar"), p("out"));
  EXPECT_EQ(hash_tree(p("out")), hash_tree(p("src")));
}

TEST_F(ArchiveTest, EqualTreesGiveByteIdenticalArchives) {
  std::mt19937_64 rng(24);
  make_random_tree(p("src"), rng, {.max_files = 50});
  write_archive(p("src"), p("a.tar"));
  fs::create_directories(p("copy"));
  ASSERT_EQ(run_process({"/bin/cp", "-a", (p("src") / ".").string(), p("copy").string()}).exit_code, 0);
  write_archive(p("copy"), p("b.tar"));
  EXPECT_EQ(fsutil::read_file(p("a.tar")), fsutil::read_file(p("b.tar")));
}

TEST_F(ArchiveTest, EntriesAreLexicographicAndExcludesApply) {
  put_file(p("src/b/2"), "x");
  put_file(p("src/a"), "y");
  put_file(p("src/checkpoints/old.tar"), "z");
  put_file(p("src/c"), "w");
  write_archive(p("src"), p("a.tar"), {"checkpoints"});
  std::vector<std::string> names;
  for (const auto& e : list_archive(p("a.tar"))) names.push_back(e.path);
  EXPECT_EQ(names, (std::vector<std::string>{"a", "b", "b/2", "c"}));
}

TEST_F(ArchiveTest, NoPartialFileLeftBehind) {
  put_file(p("src/a"), "y");
  write_archive(p("src"), p("a.tar"));
  EXPECT_FALSE(fs::exists(p("a.tar.partial")));
  EXPECT_EQ(fs::status(p("a.tar")).permissions() & fs::perms::all, fs::perms(0600));
}

TEST_F(ArchiveTest, TruncatedArchiveIsCorrupt) {
  std::mt19937_64 rng(25);
  make_random_tree(p("src"), rng, {.max_files = 20, .max_total_bytes = 1 << 20});
  put_file(p("src/big"), std::string(20000, 'q'));
  write_archive(p("src"), p("a.tar"));
  auto data = fsutil::read_file(p("a.tar"));
  for (std::size_t cut : {data.size() - 512, data.size() / 2, std::size_t{700}}) {
    put_file(p("t.tar"), data.substr(0, cut));
    try {
      extract_archive(p("t.tar"), p("out-" + std::to_string(cut)));
      ADD_FAILURE() << "cut at " << cut;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::ArchiveCorrupt) << cut;
    }
  }
}

TEST_F(ArchiveTest, ChecksumMismatchIsCorrupt) {
  put_file(p("src/a"), "content");
  write_archive(p("src"), p("a.tar"));
  auto data = fsutil::read_file(p("a.tar"));
  data[10] ^= 0x20;  // inside the first name field
  put_file(p("bad.tar"), data);
  try {
    list_archive(p("bad.tar"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ArchiveCorrupt);
  }
}

TEST_F(ArchiveTest, RejectsPathsEscapingTheDestination) {
  put_file(p("src/inner/a"), "evil");
  auto r = run_process({"/bin/tar", "--format=pax", "-P", "-cf", p("evil.tar").string(), "-C",
                        p("src/inner").string(), "--transform=s,^a,../escape,", "a"});
  ASSERT_EQ(r.exit_code, 0) << r.err;
  try {
    extract_archive(p("evil.tar"), p("out"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ArchiveCorrupt);
  }
  EXPECT_FALSE(fs::exists(p("escape")));
}

TEST_F(ArchiveTest, MissingArchive) {
  try {
    extract_archive(p("nope.tar"), p("out"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::CheckpointNotFound);
  }
}

}  // namespace
}  // namespace dbm::lifecycle
