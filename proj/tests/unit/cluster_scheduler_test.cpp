#include <gtest/gtest.h>

#include <atomic>
#include <chrono>
#include <map>
#include <random>
#include <thread>

#include "clustersim/cluster.hpp"
#include "clustersim/hook_log.hpp"
#include "clustersim/scheduler.hpp"
#include "common/error.hpp"
#include "common/fsutil.hpp"

namespace dbm::clustersim {
namespace {

using namespace std::chrono_literals;

class SchedulerTest : public ::testing::Test {
 protected:
  void SetUp() override {
    ClusterConfig cfg;
    cfg.nodes = 8;
    cfg.cluster_root = tmp.path() / "cluster";
    cluster = std::make_unique<Cluster>(cfg);
    sched = std::make_unique<Scheduler>(*cluster, [](const std::string& u) { return u == "admin"; });
  }
  void TearDown() override { sched.reset(); }

  /// A hook that logs `steps` steps, each taking `step_time`.
  static NodeHook stepping(int steps, std::chrono::milliseconds step_time = 0ms) {
    return [steps, step_time](NodeContext& ctx) {
      for (int i = 0; i < steps; ++i) {
        ctx.step("s" + std::to_string(i), [&] { std::this_thread::sleep_for(step_time); });
      }
    };
  }

  JobSpec spec(int nodes, const std::string& owner = "bob") {
    JobSpec s;
    s.num_nodes = nodes;
    s.owner = owner;
    s.prolog = stepping(3);
    s.epilog = stepping(2);
    return s;
  }

  fsutil::TempDir tmp{"dbm-sched"};
  std::unique_ptr<Cluster> cluster;
  std::unique_ptr<Scheduler> sched;
};

TEST_F(SchedulerTest, NodesAreNumberedFromOneWithLoopbackIps) {
  auto nodes = cluster->nodes();
  ASSERT_EQ(nodes.size(), 8u);
  std::set<std::string> ips, roots;
  for (int i = 0; i < 8; ++i) {
    EXPECT_EQ(nodes[i].node_id, i + 1);
    EXPECT_EQ(nodes[i].hostname, "node-" + std::to_string(i + 1));
    EXPECT_EQ(nodes[i].ip, "127.64.0." + std::to_string(i + 1));
    ips.insert(nodes[i].ip);
    roots.insert(nodes[i].local_root.string());
  }
  EXPECT_EQ(ips.size(), 8u);
  EXPECT_EQ(roots.size(), 8u);
  EXPECT_EQ(ipv4_offset("127.64.0.0", 300), "127.64.1.44");
}

TEST_F(SchedulerTest, AllocatesLowestFreeNodesAndConservesThem) {
  EXPECT_EQ(sched->free_nodes(), 8);
  auto a = sched->submit(spec(4));
  ASSERT_EQ(a.nodes.size(), 4u);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(a.nodes[i].node_id, i + 1);
  EXPECT_EQ(sched->free_nodes(), 4);
  ASSERT_TRUE(sched->wait_phase(a.job_id, JobPhase::Sleeping));
  sched->signal_stop(a.job_id);
  auto done = sched->wait_done(a.job_id);
  EXPECT_EQ(done.phase, JobPhase::Done);
  EXPECT_EQ(done.exit_code, 0);
  EXPECT_EQ(sched->free_nodes(), 8);
  EXPECT_EQ(done.phase_history, (std::vector<JobPhase>{JobPhase::PrologRunning, JobPhase::Sleeping,
                                                       JobPhase::EpilogRunning, JobPhase::Done}));
}

TEST_F(SchedulerTest, InsufficientResourcesIsImmediate) {
  auto busy = spec(6);
  auto a = sched->submit(busy);
  auto t0 = std::chrono::steady_clock::now();
  try {
    sched->submit(spec(4));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::InsufficientResources);
    EXPECT_EQ(e.details().at("free"), 2);
    EXPECT_EQ(e.details().at("requested"), 4);
  }
  EXPECT_LT(std::chrono::steady_clock::now() - t0, 100ms);
  EXPECT_EQ(sched->free_nodes(), 2);
  sched->cancel(a.job_id, "bob");
  sched->wait_done(a.job_id);
}

TEST_F(SchedulerTest, RejectsBadSpecs) {
  auto s = spec(0);
  try {
    sched->submit(s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::InvalidNodeCount);
  }
  s = spec(1);
  s.queue = "batch";
  try {
    sched->submit(s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::InvalidQueue);
  }
  EXPECT_EQ(sched->free_nodes(), 8);
}

TEST_F(SchedulerTest, SignalStopPhaseGuards) {
  auto s = spec(1);
  std::atomic<bool> release{false};
  s.prolog = [&](NodeContext& ctx) {
    ctx.step("hold", [&] {
      while (!release) std::this_thread::sleep_for(1ms);
    });
  };
  auto a = sched->submit(s);
  try {
    sched->signal_stop(a.job_id);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::WrongPhase);
  }
  release = true;
  ASSERT_TRUE(sched->wait_phase(a.job_id, JobPhase::Sleeping));
  sched->signal_stop(a.job_id);
  try {
    sched->signal_stop(a.job_id);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::WrongPhase);
  }
  sched->wait_done(a.job_id);
  try {
    sched->signal_stop("job-nope");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NotFound);
  }
}

TEST_F(SchedulerTest, CancelRequiresOwnerOrAdmin) {
  auto a = sched->submit(spec(2));
  ASSERT_TRUE(sched->wait_phase(a.job_id, JobPhase::Sleeping));
  try {
    sched->cancel(a.job_id, "mallory");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::PermissionDenied);
  }
  sched->cancel(a.job_id, "admin");
  auto done = sched->wait_done(a.job_id);
  EXPECT_TRUE(done.epilog_ok);
  EXPECT_EQ(sched->free_nodes(), 8);
}

TEST_F(SchedulerTest, CancelDuringPrologLetsPrologFinishThenRunsEpilog) {
  auto s = spec(3);
  s.prolog = stepping(5, 20ms);
  auto a = sched->submit(s);
  std::this_thread::sleep_for(30ms);
  sched->cancel(a.job_id, "bob");
  auto done = sched->wait_done(a.job_id);
  EXPECT_EQ(done.exit_code, 130);
  EXPECT_TRUE(done.prolog_ok);
  EXPECT_EQ(done.phase_history,
            (std::vector<JobPhase>{JobPhase::PrologRunning, JobPhase::EpilogRunning, JobPhase::Done}));
  auto lines = read_hook_log(sched->job_log_path(a.job_id));
  std::map<std::string, int> prolog_ends, epilog_ends;
  for (const auto& l : lines) {
    if (l.mark != "end") continue;
    (l.phase == "prolog" ? prolog_ends : epilog_ends)[l.node]++;
  }
  ASSERT_EQ(prolog_ends.size(), 3u);
  for (const auto& [node, n] : prolog_ends) EXPECT_EQ(n, 5) << node;
  ASSERT_EQ(epilog_ends.size(), 3u);
  for (const auto& [node, n] : epilog_ends) EXPECT_EQ(n, 2) << node;
}

TEST_F(SchedulerTest, PrologFailureRoutesToEpilogAfterSiblingsFinish) {
  auto s = spec(3);
  std::atomic<int> finished{0};
  s.prolog = [&](NodeContext& ctx) {
    ctx.step("work", [&] {
      std::this_thread::sleep_for(ctx.index() == 1 ? 1ms : 30ms);
      if (ctx.index() == 1) throw Error(Errc::Internal, "boom");
      ++finished;
    });
  };
  auto a = sched->submit(s);
  auto done = sched->wait_done(a.job_id);
  EXPECT_EQ(finished, 2);
  EXPECT_FALSE(done.prolog_ok);
  EXPECT_EQ(done.exit_code, 1);
  EXPECT_TRUE(done.epilog_ok);
  auto lines = read_hook_log(sched->job_log_path(a.job_id));
  int fails = 0, epilog_lines = 0;
  for (const auto& l : lines) {
    if (l.mark == "fail") ++fails;
    if (l.phase == "epilog") ++epilog_lines;
  }
  EXPECT_EQ(fails, 1);
  EXPECT_EQ(epilog_lines, 3 * 2 * 2);
  EXPECT_EQ(sched->free_nodes(), 8);
}

TEST_F(SchedulerTest, NodesReleasedOnlyAfterEpilog) {
  auto s = spec(4);
  std::atomic<int> free_during_epilog{-1};
  s.epilog = [&](NodeContext& ctx) {
    ctx.step("observe", [&] {
      std::this_thread::sleep_for(5ms);
      free_during_epilog = cluster->free_nodes();
    });
  };
  auto a = sched->submit(s);
  ASSERT_TRUE(sched->wait_phase(a.job_id, JobPhase::Sleeping));
  sched->signal_stop(a.job_id);
  sched->wait_done(a.job_id);
  EXPECT_EQ(free_during_epilog, 4);
  EXPECT_EQ(cluster->free_nodes(), 8);
}

TEST_F(SchedulerTest, TaskPayloadRunsOnceAndEndsJob) {
  auto s = spec(1);
  std::atomic<int> runs{0};
  s.payload.kind = PayloadKind::Task;
  s.payload.task = [&](const JobInfo&) { ++runs; };
  auto a = sched->submit(s);
  auto done = sched->wait_done(a.job_id);
  EXPECT_EQ(runs, 1);
  EXPECT_TRUE(done.payload_ok);
  EXPECT_EQ(done.exit_code, 0);
}

TEST_F(SchedulerTest, CallbacksFireInOrder) {
  auto s = spec(2);
  std::mutex mu;
  std::vector<std::string> events;
  auto rec = [&](const char* what) {
    return [&, what](const JobInfo&) {
      std::lock_guard lk(mu);
      events.push_back(what);
    };
  };
  s.callbacks.on_running = rec("running");
  s.callbacks.on_epilog_begin = rec("epilog");
  s.callbacks.on_done = rec("done");
  auto a = sched->submit(s);
  ASSERT_TRUE(sched->wait_phase(a.job_id, JobPhase::Sleeping));
  sched->signal_stop(a.job_id);
  sched->wait_done(a.job_id);
  EXPECT_EQ(events, (std::vector<std::string>{"running", "epilog", "done"}));
}

TEST_F(SchedulerTest, AllocationsPersistForRestartedService) {
  auto a = sched->submit(spec(3));
  ASSERT_TRUE(sched->wait_phase(a.job_id, JobPhase::Sleeping));
  ClusterConfig cfg = cluster->config();
  Cluster reloaded(cfg);
  EXPECT_EQ(reloaded.free_nodes(), 5);
  EXPECT_EQ(reloaded.allocated_job_ids(), std::vector<std::string>{a.job_id});
  sched->signal_stop(a.job_id);
  sched->wait_done(a.job_id);
}

TEST_F(SchedulerTest, ConcurrentSubmissionsNeverOverAllocate) {
  std::atomic<int> granted{0}, refused{0};
  std::vector<std::string> ids;
  std::mutex mu;
  std::vector<std::thread> threads;
  for (int i = 0; i < 12; ++i) {
    threads.emplace_back([&] {
      try {
        auto j = sched->submit(spec(3));
        std::lock_guard lk(mu);
        ids.push_back(j.job_id);
        ++granted;
      } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::InsufficientResources);
        ++refused;
      }
    });
  }
  for (auto& t : threads) t.join();
  EXPECT_EQ(granted, 2);
  EXPECT_EQ(refused, 10);
  EXPECT_EQ(sched->free_nodes(), 2);
  for (const auto& id : ids) sched->cancel(id, "admin");
  for (const auto& id : ids) sched->wait_done(id);
  EXPECT_EQ(sched->free_nodes(), 8);
}

TEST(HookLog, LineFormat) {
  fsutil::TempDir tmp("dbm-hooklog");
  HookLog log(tmp.path() / "job.log");
  log.write("prolog", "node-1", "CopyCentralToLocal", "start");
  log.write("prolog", "node-1", "CopyCentralToLocal", "end");
  EXPECT_EQ(fsutil::read_file(tmp.path() / "job.log"),
            "prolog node-1 CopyCentralToLocal start\nprolog node-1 CopyCentralToLocal end\n");
  auto lines = read_hook_log(tmp.path() / "job.log");
  ASSERT_EQ(lines.size(), 2u);
  EXPECT_EQ(lines[1].mark, "end");
  EXPECT_EQ(lines[1].node, "node-1");
}

}  // namespace
}  // namespace dbm::clustersim
