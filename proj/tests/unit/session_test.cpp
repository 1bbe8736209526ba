#include <gtest/gtest.h>

#include <sys/stat.h>

#include <thread>

#include "common/error.hpp"
#include "common/fsutil.hpp"
#include "gateway/session.hpp"
#include "security/identity.hpp"
#include "support/test_env.hpp"

namespace dbm::gateway {
namespace {

class SessionTest : public ::testing::Test {
 protected:
  void SetUp() override {
    fsutil::write_json_atomic(tmp.path() / "identities.json", testing::default_identities());
    ids = std::make_unique<security::IdentityTable>(tmp.path() / "identities.json");
  }

  Errc code_of(const SessionIssuer& s, const std::string& token) {
    try {
      s.authenticate(token);
    } catch (const Error& e) {
      return e.code();
    }
    return Errc::Internal;
  }

  fsutil::TempDir tmp{"dbm-session"};
  std::unique_ptr<security::IdentityTable> ids;
};

TEST_F(SessionTest, LoginAuthenticatesToTheSameIdentity) {
  SessionIssuer s(tmp.path() / "k", *ids);
  auto id = s.authenticate(s.login("bob"));
  EXPECT_EQ(id.name, "bob");
  EXPECT_TRUE(id.in_group("secgroup"));
  EXPECT_THROW(s.login("mallory"), Error);
}

TEST_F(SessionTest, TamperedTokensAreRejected) {
  SessionIssuer s(tmp.path() / "k", *ids);
  auto bob = s.login("bob");
  auto carol = s.login("carol");
  auto dot_b = bob.find('.');
  auto dot_c = carol.find('.');
  // Carol's claims with Bob's signature.
  EXPECT_EQ(code_of(s, carol.substr(0, dot_c) + bob.substr(dot_b)), Errc::Unauthenticated);
  auto flipped = bob;
  flipped.back() = flipped.back() == '0' ? '1' : '0';
  EXPECT_EQ(code_of(s, flipped), Errc::Unauthenticated);
  EXPECT_EQ(code_of(s, "nodot"), Errc::Unauthenticated);
  EXPECT_EQ(code_of(s, ""), Errc::Unauthenticated);
}

TEST_F(SessionTest, KeyPersistsAndIsPrivate) {
  auto key = tmp.path() / "sub" / "k";
  std::string token;
  {
    SessionIssuer s(key, *ids);
    token = s.login("alice");
  }
  struct stat st{};
  ASSERT_EQ(::stat(key.c_str(), &st), 0);
  EXPECT_EQ(st.st_mode & 0777, 0600u);
  SessionIssuer again(key, *ids);
  EXPECT_EQ(again.authenticate(token).name, "alice");
  SessionIssuer other(tmp.path() / "other", *ids);
  EXPECT_EQ(code_of(other, token), Errc::Unauthenticated);
}

TEST_F(SessionTest, ExpiredTokensAreRejected) {
  SessionIssuer s(tmp.path() / "k", *ids, std::chrono::seconds(-1));
  EXPECT_EQ(code_of(s, s.login("bob")), Errc::Unauthenticated);
}

TEST_F(SessionTest, GroupChangesApplyToLiveTokens) {
  SessionIssuer s(tmp.path() / "k", *ids);
  auto token = s.login("bob");
  ids->remove_from_group("bob", "secgroup");
  EXPECT_FALSE(s.authenticate(token).in_group("secgroup"));
}

}  // namespace
}  // namespace dbm::gateway
