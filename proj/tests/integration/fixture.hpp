#pragma once

#include <gtest/gtest.h>

#include <signal.h>

#include <map>
#include <memory>
#include <random>
#include <string>

#include "clustersim/hook_log.hpp"
#include "common/error.hpp"
#include "engines/client.hpp"
#include "lifecycle/orchestrator.hpp"
#include "support/test_env.hpp"

namespace dbm::testing {

using registry::StatusValue;

/// One orchestrator over a private state tree.
class OrchestratorTest : public ::testing::Test {
 protected:
  explicit OrchestratorTest(int nodes = 8) : env_(nodes) {}

  void SetUp() override { orch_ = std::make_unique<lifecycle::Orchestrator>(options()); }
  void TearDown() override { orch_.reset(); }

  virtual lifecycle::LifecycleOptions options() { return env_.options(); }

  lifecycle::Orchestrator& orch() { return *orch_; }

  void create(const std::string& name, int nodes = 2,
              engines::EngineKind kind = engines::EngineKind::ToyKv,
              const std::string& group = "secgroup") {
    orch_->db_create(kind, nodes, name, group, "alice");
  }

  StatusValue status(const std::string& name) { return orch_->registry().get_status(name).value; }

  /// Starts and waits; fails the test unless the database ends up Started.
  std::string start(const std::string& name, const std::string& user = "bob") {
    auto h = orch_->db_start(name, user);
    auto st = orch_->wait_settled(name);
    EXPECT_EQ(st.value, StatusValue::Started)
        << name << ": " << orch_->last_error(name).value_or("(no error)");
    return h.job_id;
  }

  void stop(const std::string& name, const std::string& user = "bob") {
    orch_->db_stop(name, user);
    EXPECT_EQ(orch_->wait_settled(name).value, StatusValue::Stopped);
  }

  std::string checkpoint(const std::string& name, const std::string& user = "bob") {
    auto info = orch_->db_checkpoint(name, user);
    EXPECT_EQ(orch_->wait_settled(name).value, StatusValue::Stopped);
    return info.id;
  }

  /// Client authenticated with the current access key as seen by `user`.
  std::unique_ptr<engines::EngineClient> client(const std::string& name,
                                                const std::string& user = "bob") {
    auto c = std::make_unique<engines::EngineClient>(orch_->client_config(name));
    c->authenticate(security::kAccessUserName, orch_->locate_access_key(name, user));
    return c;
  }

  std::vector<clustersim::HookLogLine> job_log(const std::string& job_id) {
    return clustersim::read_hook_log(orch_->scheduler().job_log_path(job_id));
  }

  int allocated_nodes() {
    return orch_->cluster().total() - orch_->cluster().free_nodes();
  }

  TestEnv env_;
  std::unique_ptr<lifecycle::Orchestrator> orch_;
};

inline std::map<std::string, std::string> random_pairs(std::mt19937_64& rng, int n,
                                                       const std::string& prefix = "k") {
  std::map<std::string, std::string> out;
  std::uniform_int_distribution<int> len(1, 200);
  while (static_cast<int>(out.size()) < n) {
    auto key = prefix + std::to_string(rng() % 100000000);
    std::string value(static_cast<size_t>(len(rng)), ' ');
    for (auto& c : value) c = static_cast<char>(' ' + rng() % 95);
    out[key] = value;
  }
  return out;
}

inline Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an error";
  return Errc::Internal;
}

inline bool pid_alive(pid_t pid) { return pid > 0 && ::kill(pid, 0) == 0; }

}  // namespace dbm::testing
