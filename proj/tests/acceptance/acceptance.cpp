// Acceptance runner: one PASS/FAIL line per primary criterion.

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>

#include "clustersim/hook_log.hpp"
#include "common/error.hpp"
#include "common/fsutil.hpp"
#include "dyndns/server.hpp"
#include "dyndns/store.hpp"
#include "engines/client.hpp"
#include "gateway/api.hpp"
#include "gateway/http_client.hpp"
#include "gateway/session.hpp"
#include "lifecycle/orchestrator.hpp"
#include "migrate/benchmark.hpp"
#include "migrate/copy.hpp"
#include "security/credentials.hpp"
#include "security/protected_file.hpp"
#include "support/test_env.hpp"

namespace dbm::acceptance {
namespace {

using namespace std::chrono_literals;
using registry::StatusValue;
using S = StatusValue;
using Clock = std::chrono::steady_clock;
namespace fs = std::filesystem;

struct Outcome {
  bool pass = true;
  std::vector<std::string> failures;
  std::string summary;

  void require(bool ok, const std::string& what) {
    if (ok) return;
    pass = false;
    if (failures.size() < 10) failures.push_back(what);
  }
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::map<std::string, std::string> random_pairs(std::mt19937_64& rng, int n,
                                                const std::string& prefix) {
  std::map<std::string, std::string> out;
  std::uniform_int_distribution<int> len(1, 120);
  while (static_cast<int>(out.size()) < n) {
    auto key = prefix + std::to_string(rng() % 1000000000);
    std::string value(static_cast<size_t>(len(rng)), ' ');
    for (auto& c : value) c = static_cast<char>(' ' + rng() % 95);
    out[key] = value;
  }
  return out;
}

std::optional<Errc> error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

std::unique_ptr<engines::EngineClient> client_for(lifecycle::Orchestrator& orch,
                                                  const std::string& db, const std::string& key) {
  auto c = std::make_unique<engines::EngineClient>(orch.client_config(db));
  c->authenticate(security::kAccessUserName, key);
  return c;
}

bool wait_status(lifecycle::Orchestrator& orch, const std::string& db, S want,
                 std::chrono::milliseconds timeout = 120s) {
  auto deadline = Clock::now() + timeout;
  while (Clock::now() < deadline) {
    if (orch.registry().get_status(db).value == want) return true;
    std::this_thread::sleep_for(5ms);
  }
  return false;
}

// ---- Full lifecycle ---------------------------------------------------------

Outcome lifecycle_conformance() {
  Outcome o;
  testing::TestEnv env(8, "acc-life");
  lifecycle::Orchestrator orch(env.options());
  const std::string db = "dbname01";
  auto t0 = Clock::now();
  orch.db_create(engines::EngineKind::ToyKv, 4, db, "secgroup", "alice");

  auto start = [&] {
    orch.db_start(db, "bob");
    auto st = orch.wait_settled(db);
    o.require(st.value == S::Started, "start settled " + std::string(registry::to_string(st.value)) +
                                          ": " + orch.last_error(db).value_or(""));
  };
  auto stop = [&] {
    orch.db_stop(db, "bob");
    o.require(orch.wait_settled(db).value == S::Stopped, "stop did not settle Stopped");
  };

  std::mt19937_64 rng(664);
  auto oracle = random_pairs(rng, 1000, "k");
  start();
  {
    auto c = client_for(orch, db, orch.locate_access_key(db, "bob"));
    for (const auto& [k, v] : oracle) c->put(k, v);
  }
  stop();

  auto cp = orch.db_checkpoint(db, "bob");
  o.require(orch.wait_settled(db).value == S::Stopped, "checkpoint did not settle Stopped");
  bool complete = false;
  for (const auto& c : orch.list_checkpoints(db, "bob")) {
    if (c.id == cp.id) complete = c.complete;
  }
  o.require(complete, "checkpoint " + cp.id + " not complete");

  // 500 more writes: half overwrite checkpointed keys, half are new.
  std::map<std::string, std::string> later;
  std::vector<std::string> keys;
  for (const auto& [k, v] : oracle) keys.push_back(k);
  std::shuffle(keys.begin(), keys.end(), rng);
  for (int i = 0; i < 250; ++i) later[keys[static_cast<size_t>(i)]] = "overwritten-" + std::to_string(i);
  for (const auto& [k, v] : random_pairs(rng, 250, "n")) later[k] = v;
  start();
  {
    auto c = client_for(orch, db, orch.locate_access_key(db, "bob"));
    for (const auto& [k, v] : later) c->put(k, v);
    int seen = 0;
    for (const auto& [k, v] : later) seen += c->get(k) == v;
    o.require(seen == 500, "post-checkpoint writes not readable before restore");
  }
  stop();

  orch.db_restore(db, cp.id, "alice");
  start();
  {
    auto c = client_for(orch, db, orch.locate_access_key(db, "bob"));
    int mismatches = 0;
    for (const auto& [k, v] : oracle) {
      try {
        mismatches += c->get(k) != v;
      } catch (const Error&) {
        ++mismatches;
      }
    }
    o.require(mismatches == 0, std::to_string(mismatches) + " checkpointed pairs differ after restore");
    int resurrected = 0;
    for (const auto& [k, v] : later) {
      if (oracle.count(k)) continue;
      resurrected += error_of([&] { c->get(k); }) != Errc::KeyNotFound;
    }
    o.require(resurrected == 0, std::to_string(resurrected) + " post-checkpoint keys survived restore");
  }
  stop();

  std::vector<std::pair<S, S>> got;
  for (const auto& h : orch.registry().history(db)) got.emplace_back(h.from, h.to);
  std::vector<std::pair<S, S>> cycle{{S::Stopped, S::Starting},
                                     {S::Starting, S::Started},
                                     {S::Started, S::Stopping},
                                     {S::Stopping, S::Stopped}};
  std::vector<std::pair<S, S>> want = cycle;
  want.push_back({S::Stopped, S::Checkpointing});
  want.push_back({S::Checkpointing, S::Stopped});
  want.insert(want.end(), cycle.begin(), cycle.end());
  want.insert(want.end(), cycle.begin(), cycle.end());
  o.require(got == want, "status history has " + std::to_string(got.size()) +
                             " edges, expected exact 14-edge sequence");
  double secs = seconds_since(t0);
  o.require(secs < 120.0, "runtime " + std::to_string(secs) + " s");
  char buf[160];
  std::snprintf(buf, sizeof buf, "1000+500 pairs, checkpoint %s restored, %zu edges, %.1f s",
                cp.id.c_str(), got.size(), secs);
  o.summary = buf;
  return o;
}

// ---- "Now" semantics --------------------------------------------------------

Outcome now_semantics() {
  Outcome o;
  testing::TestEnv env(8, "acc-now");
  lifecycle::Orchestrator orch(env.options());
  orch.db_create(engines::EngineKind::ToyKv, 6, "busy", "secgroup", "alice");
  orch.db_create(engines::EngineKind::ToyKv, 4, "quad", "secgroup", "alice");
  orch.db_start("busy", "bob");
  o.require(orch.wait_settled("busy").value == S::Started, "6-node database did not start");
  o.require(orch.cluster().free_nodes() == 2, "expected 2 free nodes");

  auto t0 = Clock::now();
  std::optional<Error> err;
  try {
    orch.db_start("quad", "bob");
  } catch (const Error& e) {
    err = e;
  }
  double secs = seconds_since(t0);
  o.require(err && err->code() == Errc::InsufficientResources, "start did not fail with InsufficientResources");
  if (err) {
    o.require(err->details().value("free", -1) == 2, "details.free != 2");
    o.require(err->details().value("requested", -1) == 4, "details.requested != 4");
  }
  o.require(secs < 1.0, "answer took " + std::to_string(secs) + " s");
  o.require(orch.registry().get_status("quad").value == S::Stopped, "quad not Stopped");
  int quad_dns = 0;
  for (const auto& r : orch.dns().records()) {
    quad_dns += r.name == "quad" || r.name.rfind("quad-", 0) == 0;
  }
  o.require(quad_dns == 0, std::to_string(quad_dns) + " DNS records for quad");
  o.require(orch.cluster().free_nodes() == 2, "allocation changed by failed start");
  o.require(!fs::exists(orch.cluster().nodes().front().local_root / "quad"), "local dir laid down");
  orch.db_stop("busy", "bob");
  orch.wait_settled("busy");
  char buf[120];
  std::snprintf(buf, sizeof buf, "InsufficientResources in %.3f s, free=2 requested=4, 0 DNS, 0 nodes",
                secs);
  o.summary = buf;
  return o;
}

// ---- Hook uninterruptibility -------------------------------------------------

Outcome hook_uninterruptibility(int trials) {
  Outcome o;
  testing::TestEnv env(8, "acc-hook");
  lifecycle::Orchestrator orch(env.options());
  orch.db_create(engines::EngineKind::ToyKv, 3, "hk", "secgroup", "alice");
  orch.db_create(engines::EngineKind::ToyTabular, 2, "ht", "secgroup", "alice");

  // Calibrate the cancellation window on an undisturbed start.
  auto t0 = Clock::now();
  orch.db_start("hk", "bob");
  orch.wait_settled("hk");
  double prolog = seconds_since(t0);
  orch.db_stop("hk", "bob");
  orch.wait_settled("hk");
  std::vector<std::chrono::microseconds> points;
  for (int i = 0; i < 50; ++i) {
    points.emplace_back(static_cast<long>(prolog * 1.2e6 * i / 49.0));
  }

  const std::vector<std::string> prolog_order{"RegisterDns", "CopyCentralToLocal", "StartServices",
                                              "RotateAccessKey", "MarkStarted"};
  const std::vector<std::string> epilog_order{"StopServices", "CopyLocalToCentral", "DeregisterDns",
                                              "MarkStopped"};
  auto index_of = [](const std::vector<std::string>& v, const std::string& s) {
    return static_cast<int>(std::find(v.begin(), v.end(), s) - v.begin());
  };

  std::mt19937_64 rng(666);
  int violations = 0;
  int cancelled_in_prolog = 0;
  std::set<int> used_points;
  for (int t = 0; t < trials; ++t) {
    std::string db = t % 2 ? "ht" : "hk";
    int p = static_cast<int>(rng() % points.size());
    used_points.insert(p);
    auto note = [&](bool ok, const std::string& what) {
      if (!ok) ++violations;
      o.require(ok, "trial " + std::to_string(t) + ": " + what);
    };
    auto h = orch.db_start(db, "bob");
    std::this_thread::sleep_for(points[static_cast<size_t>(p)]);
    if (orch.registry().get_status(db).value == S::Starting) ++cancelled_in_prolog;
    try {
      orch.cancel_job(h.job_id, "bob");
    } catch (const Error&) {
    }
    orch.scheduler().wait_done(h.job_id, std::chrono::seconds(120));
    note(wait_status(orch, db, S::Stopped, 30s), "final status not Stopped");

    std::map<std::string, std::map<std::string, std::map<std::string, int>>> marks;  // node/step/mark
    std::map<std::string, std::vector<std::string>> prolog_seq, epilog_seq;
    for (const auto& l : clustersim::read_hook_log(orch.scheduler().job_log_path(h.job_id))) {
      if (l.step.rfind("service:", 0) == 0) continue;
      marks[l.phase + " " + l.node][l.step][l.mark]++;
      if (l.mark != "start") continue;
      (l.phase == "prolog" ? prolog_seq : epilog_seq)[l.node].push_back(l.step);
    }
    for (const auto& [where, steps] : marks) {
      for (const auto& [step, m] : steps) {
        int starts = m.count("start") ? m.at("start") : 0;
        int ends = (m.count("end") ? m.at("end") : 0) + (m.count("fail") ? m.at("fail") : 0);
        note(starts == 1 && ends == 1, where + " " + step + " start/end " + std::to_string(starts) +
                                           "/" + std::to_string(ends));
      }
    }
    for (const auto& [node, seq] : prolog_seq) {
      for (size_t i = 1; i < seq.size(); ++i) {
        note(index_of(prolog_order, seq[i - 1]) < index_of(prolog_order, seq[i]),
             node + " prolog out of order");
      }
    }
    note(!prolog_seq.empty(), "no prolog recorded");
    for (const auto& [node, seq] : prolog_seq) {
      auto it = epilog_seq.find(node);
      note(it != epilog_seq.end(), node + " has no epilog");
      if (it == epilog_seq.end()) continue;
      note(std::count(it->second.begin(), it->second.end(), "MarkStopped") == 1,
           node + " epilog MarkStopped not exactly once");
      for (size_t i = 1; i < it->second.size(); ++i) {
        note(index_of(epilog_order, it->second[i - 1]) < index_of(epilog_order, it->second[i]),
             node + " epilog out of order or repeated");
      }
    }
    note(orch.cluster().free_nodes() == orch.cluster().total(), "nodes not conserved");
    note(orch.dns().records().empty(), "DNS records left behind");
  }
  o.require(violations == 0, std::to_string(violations) + " violations");
  o.summary = std::to_string(trials) + " trials, " + std::to_string(used_points.size()) +
              " distinct cancel points over " + std::to_string(static_cast<int>(prolog * 1000)) +
              " ms, " + std::to_string(cancelled_in_prolog) + " cancelled mid-prolog, " +
              std::to_string(violations) + " violations";
  return o;
}

// ---- Copy engine -------------------------------------------------------------

Outcome copy_engine(int trees) {
  Outcome o;
  fs::path scratch = fs::is_directory("/dev/shm") ? "/dev/shm" : fs::temp_directory_path();
  auto base = scratch / ("acc-copy-" + std::to_string(::getpid()));
  fs::create_directories(base);
  std::mt19937_64 rng(667);
  const std::vector<migrate::CopyMode> modes{migrate::CopyMode::single(), migrate::CopyMode::multi(1),
                                             migrate::CopyMode::multi(2), migrate::CopyMode::multi(3),
                                             migrate::CopyMode::multi(8)};
  int mismatches = 0;
  std::uint64_t bytes = 0;
  for (int t = 0; t < trees; ++t) {
    auto src = base / "src";
    testing::TreeShape shape;
    shape.max_files = 512;
    shape.max_total_bytes = std::uint64_t(1) << (20 + rng() % 9);
    bytes += testing::make_random_tree(src, rng, shape);
    auto want = testing::hash_tree(src);
    for (const auto& mode : modes) {
      auto dst = base / "dst";
      migrate::copy_tree(src, dst, mode);
      if (testing::hash_tree(dst) != want) {
        ++mismatches;
        o.require(false, "tree " + std::to_string(t) + " differs under " + mode.to_string());
      }
      fs::remove_all(dst);
    }
    fs::remove_all(src);
  }

  migrate::BenchmarkOptions bo;
  bo.scratch = base / "bench";
  fs::create_directories(bo.scratch);
  bo.sizes_per_node = {256ULL << 20};
  bo.modes = {migrate::CopyMode::single(), migrate::CopyMode::multi(3)};
  bo.directions = {migrate::Direction::CentralToLocal, migrate::Direction::LocalToCentral};
  bo.trials = 3;
  auto table = migrate::run_benchmark(bo);
  auto csv = table.to_csv();
  std::istringstream lines(csv);
  std::string header;
  std::getline(lines, header);
  o.require(header == "direction,mode,workers,bytes_per_node,files,seconds,mb_per_sec",
            "unexpected CSV header: " + header);
  int rows = 0;
  for (std::string line; std::getline(lines, line);) {
    if (line.empty()) continue;
    ++rows;
    o.require(std::count(line.begin(), line.end(), ',') == 6, "malformed CSV row: " + line);
  }
  o.require(rows == 4, "expected 4 CSV rows, got " + std::to_string(rows));
  std::map<std::pair<int, int>, double> rate;
  for (const auto& r : table.rows) {
    o.require(r.files == 256, "benchmark corpus is not 256 files");
    rate[{static_cast<int>(r.direction), r.mode.effective_workers()}] = r.mb_per_sec;
  }
  double single = rate[{0, 1}] + rate[{1, 1}];
  double multi = rate[{0, 3}] + rate[{1, 3}];
  double ratio = single > 0 ? multi / single : 0.0;
  unsigned cores = std::thread::hardware_concurrency();
  if (ratio <= 1.0) {
    o.require(false, "MultiStream(3)/SingleStream = " + std::to_string(ratio) +
                         (cores < 4 ? " (precondition unmet: " + std::to_string(cores) +
                                          " core(s), at least 4 required)"
                                    : ""));
  }
  fs::remove_all(base);
  char buf[200];
  std::snprintf(buf, sizeof buf,
                "%d trees x %zu modes, %.0f MiB, %d mismatches; MultiStream(3)/SingleStream = %.2f "
                "(%.0f vs %.0f MB/s, %u cores)",
                trees, modes.size(), bytes / 1048576.0, mismatches, ratio, multi / 2, single / 2,
                cores);
  o.summary = buf;
  return o;
}

// ---- DNS ---------------------------------------------------------------------

struct WireAnswer {
  int rcode = -1;
  bool aa = false;
  std::vector<std::pair<std::string, std::uint32_t>> a;  // address, ttl
};

/// Hand-rolled stub: builds the query and walks the reply without the
/// service's own codec.
std::optional<WireAnswer> ask(std::uint16_t port, const std::string& fqdn, std::uint16_t id) {
  std::vector<std::uint8_t> q{static_cast<std::uint8_t>(id >> 8), static_cast<std::uint8_t>(id),
                              0x01, 0x00, 0, 1, 0, 0, 0, 0, 0, 0};
  std::string name = fqdn;
  if (!name.empty() && name.back() == '.') name.pop_back();
  std::stringstream ss(name);
  for (std::string label; std::getline(ss, label, '.');) {
    q.push_back(static_cast<std::uint8_t>(label.size()));
    q.insert(q.end(), label.begin(), label.end());
  }
  q.insert(q.end(), {0, 0, 1, 0, 1});

  int fd = ::socket(AF_INET, SOCK_DGRAM, 0);
  sockaddr_in to{};
  to.sin_family = AF_INET;
  to.sin_port = htons(port);
  to.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  std::vector<std::uint8_t> r(1500);
  ssize_t n = -1;
  for (int attempt = 0; attempt < 3 && n < 0; ++attempt) {
    ::sendto(fd, q.data(), q.size(), 0, reinterpret_cast<sockaddr*>(&to), sizeof to);
    pollfd p{fd, POLLIN, 0};
    if (::poll(&p, 1, 500) == 1) n = ::recv(fd, r.data(), r.size(), 0);
  }
  ::close(fd);
  if (n < 12) return std::nullopt;
  r.resize(static_cast<size_t>(n));
  auto u16 = [&](size_t at) { return static_cast<std::uint16_t>((r.at(at) << 8) | r.at(at + 1)); };
  if (u16(0) != id || !(r[2] & 0x80)) return std::nullopt;
  WireAnswer w;
  w.aa = r[2] & 0x04;
  w.rcode = r[3] & 0x0f;
  size_t pos = 12;
  auto skip_name = [&] {
    while (true) {
      std::uint8_t len = r.at(pos);
      if ((len & 0xc0) == 0xc0) {
        pos += 2;
        return;
      }
      pos += 1 + len;
      if (len == 0) return;
    }
  };
  for (int i = 0; i < u16(4); ++i) {
    skip_name();
    pos += 4;
  }
  for (int i = 0; i < u16(6); ++i) {
    skip_name();
    std::uint16_t type = u16(pos);
    std::uint32_t ttl = (std::uint32_t(u16(pos + 4)) << 16) | u16(pos + 6);
    std::uint16_t rdlen = u16(pos + 8);
    pos += 10;
    if (type == 1 && rdlen == 4) {
      w.a.emplace_back(std::to_string(r.at(pos)) + "." + std::to_string(r.at(pos + 1)) + "." +
                           std::to_string(r.at(pos + 2)) + "." + std::to_string(r.at(pos + 3)),
                       ttl);
    }
    pos += rdlen;
  }
  return w;
}

Outcome dns_conformance(int sequences) {
  Outcome o;
  fsutil::TempDir tmp("acc-dns");
  dyndns::ZoneConfig cfg;
  cfg.store_dir = tmp.path();
  cfg.udp_port = 0;
  cfg.http_port = 0;
  dyndns::RecordStore store(cfg);
  dyndns::DnsServer server(store, cfg);
  httplib::Client http("127.0.0.1", server.http_port());
  const std::string zone = "db.supercloud.test.";

  std::mt19937_64 rng(668);
  std::vector<std::string> pool;
  for (int i = 0; i < 24; ++i) pool.push_back("db" + std::to_string(i % 8) + (i < 8 ? "" : "-" + std::to_string(i / 8)));
  std::map<std::string, std::pair<std::string, std::uint32_t>> oracle;
  std::uint16_t id = 1;
  int queries = 0, ops = 0;

  auto check_name = [&](const std::string& name) {
    auto fqdn = name + "." + zone;
    auto w = ask(server.udp_port(), rng() % 2 ? fqdn : [&] {
      auto upper = fqdn;
      for (auto& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
      return upper;
    }(), id++);
    ++queries;
    if (!w) return o.require(false, "no answer for " + fqdn);
    auto table = store.resolve(name);
    auto it = oracle.find(name);
    o.require(table.has_value() == (it != oracle.end()), "table disagrees with oracle on " + name);
    if (it == oracle.end()) {
      o.require(w->rcode == 3 && w->a.empty(), fqdn + " absent but rcode " + std::to_string(w->rcode));
      return;
    }
    o.require(w->rcode == 0 && w->aa, fqdn + " present but rcode " + std::to_string(w->rcode));
    o.require(w->a.size() == 1 && w->a[0].first == it->second.first &&
                  w->a[0].second == it->second.second && w->a[0].second <= 60,
              fqdn + " wrong A record");
    if (table) {
      o.require(table->address == w->a.at(0).first && table->ttl == w->a.at(0).second,
                fqdn + " wire differs from table");
    }
  };

  for (int s = 0; s < sequences; ++s) {
    int len = 5 + static_cast<int>(rng() % 30);
    for (int i = 0; i < len; ++i) {
      const auto& name = pool[rng() % pool.size()];
      ++ops;
      if (rng() % 3 == 0) {
        auto r = http.Delete("/records/" + name);
        o.require(r && r->status == 200, "DELETE failed for " + name);
        oracle.erase(name);
      } else {
        std::string ip = "10." + std::to_string(rng() % 256) + "." + std::to_string(rng() % 256) +
                         "." + std::to_string(1 + rng() % 254);
        std::uint32_t ttl = static_cast<std::uint32_t>(rng() % 70);
        nlohmann::json body{{"address", ip}, {"ttl", ttl}};
        auto r = http.Put("/records/" + name, body.dump(), "application/json");
        if (ttl == 0 || ttl > 60) {
          o.require(r && r->status / 100 == 4, "TTL " + std::to_string(ttl) + " accepted");
        } else {
          o.require(r && r->status == 200, "PUT failed for " + name);
          oracle[name] = {ip, ttl};
        }
      }
      check_name(name);
    }
    for (const auto& name : pool) check_name(name);
    for (const char* outside : {"db1.example.org.", "supercloud.test.", "x.db.supercloud.test.org."}) {
      auto w = ask(server.udp_port(), outside, id++);
      ++queries;
      o.require(w && w->rcode == 5, std::string(outside) + " not REFUSED");
    }
  }
  o.summary = std::to_string(sequences) + " sequences, " + std::to_string(ops) + " operations, " +
              std::to_string(queries) + " wire queries";
  return o;
}

// ---- Security ----------------------------------------------------------------

Outcome security_model() {
  Outcome o;
  testing::TestEnv env(8, "acc-sec");
  lifecycle::Orchestrator orch(env.options());
  gateway::SessionIssuer sessions(env.root() / "session.key", orch.identities());
  gateway::ApiServer api(orch, sessions, "127.0.0.1", 0);
  std::string url = "http://127.0.0.1:" + std::to_string(api.port());
  const std::string db = "secdb";
  auto d = orch.db_create(engines::EngineKind::ToyKv, 2, db, "secgroup", "alice");

  std::vector<std::string> secrets{
      fsutil::read_file(security::shared_secret_path(d.central_path)),
      fsutil::read_file(security::superuser_path(d.central_path))};
  for (auto& s : secrets) {
    while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
  }
  std::vector<std::string> api_dumps;
  std::vector<std::string> proc_dumps;
  auto snapshot_api = [&] {
    for (const char* user : {"bob", "alice", "root", "carol"}) {
      gateway::HttpClient c(url);
      c.login(user);
      for (auto path : {"/databases", "/databases/secdb", "/databases/secdb/checkpoints",
                        "/databases/secdb/revocations", "/cluster", "/whoami",
                        "/databases/secdb/accesskey"}) {
        api_dumps.push_back(c.send("GET", path).body.dump());
      }
    }
  };
  auto snapshot_proc = [&] {
    for (const auto& node : orch.cluster().nodes()) {
      auto run = node.local_root / db / "run";
      if (!fs::is_directory(run)) continue;
      for (const auto& f : fs::directory_iterator(run)) {
        if (f.path().extension() != ".pid") continue;
        auto pid = fsutil::read_file(f.path());
        while (!pid.empty() && pid.back() == '\n') pid.pop_back();
        for (const char* what : {"cmdline", "environ"}) {
          if (auto t = fsutil::try_read_file("/proc/" + pid + "/" + what)) proc_dumps.push_back(*t);
        }
      }
    }
  };

  std::vector<std::string> keys;
  for (int cycle = 0; cycle < 5; ++cycle) {
    orch.db_start(db, "bob");
    if (orch.wait_settled(db).value != S::Started) {
      o.require(false, "cycle " + std::to_string(cycle) + " did not start");
      continue;
    }
    auto key = orch.locate_access_key(db, "bob");
    auto path = orch.credentials().key_path(db);
    struct stat sb{};
    ::stat(path.c_str(), &sb);
    o.require((sb.st_mode & 0777) == 0640, "key file mode is not 0640");
    auto own = security::ownership_of(path);
    o.require(own && own->group == "secgroup", "key file group is not the security group");
    o.require(security::may_read(orch.identities().require("bob"), path), "member cannot read key");
    o.require(!security::may_read(orch.identities().require("carol"), path), "non-member can read key");
    o.require(error_of([&] { orch.locate_access_key(db, "carol"); }) == Errc::PermissionDenied,
              "non-member located the key");
    o.require(!error_of([&] { client_for(orch, db, key)->put("cycle", std::to_string(cycle)); }),
              "current key rejected");
    for (const auto& old : keys) {
      o.require(error_of([&] { client_for(orch, db, old); }) == Errc::AuthFailed,
                "stale key accepted in cycle " + std::to_string(cycle));
    }
    keys.push_back(key);
    snapshot_api();
    snapshot_proc();
    orch.db_stop(db, "bob");
    orch.wait_settled(db);
  }
  std::set<std::string> distinct(keys.begin(), keys.end());
  o.require(distinct.size() == 5, std::to_string(distinct.size()) + " distinct keys over 5 cycles");

  // Revocation: two steps.
  orch.db_start(db, "bob");
  orch.wait_settled(db);
  auto before = orch.locate_access_key(db, "dave");
  auto plan = orch.revoke_user(db, "dave", "alice");
  o.require(!plan.complete, "revocation complete before restart");
  o.require(!error_of([&] { client_for(orch, db, before); }), "old key rejected before restart");
  o.require(error_of([&] { orch.locate_access_key(db, "dave"); }) == Errc::PermissionDenied,
            "revoked user still locates the key");
  orch.db_stop(db, "bob");
  orch.wait_settled(db);
  orch.db_start(db, "bob");
  orch.wait_settled(db);
  o.require(error_of([&] { client_for(orch, db, before); }) == Errc::AuthFailed,
            "old key still valid after restart");
  bool completed = false;
  for (const auto& p : orch.revocations(db, "alice")) {
    if (p.user == "dave") completed = p.complete;
  }
  o.require(completed, "revocation plan not COMPLETE after restart");
  snapshot_api();
  snapshot_proc();
  orch.db_stop(db, "bob");
  orch.wait_settled(db);
  orch.db_checkpoint(db, "bob");
  orch.wait_settled(db);
  snapshot_api();

  // Scanner: everything visible outside the secrets directories.
  int hits = 0, scanned = 0;
  auto scan = [&](const std::string& text, const std::string& where) {
    ++scanned;
    for (const auto& s : secrets) {
      if (!s.empty() && text.find(s) != std::string::npos) {
        ++hits;
        o.require(false, "secret found in " + where);
      }
    }
  };
  for (auto it = fs::recursive_directory_iterator(env.root()); it != fs::recursive_directory_iterator(); ++it) {
    if (it->is_directory() && it->path().filename() == "secrets") {
      it.disable_recursion_pending();
      continue;
    }
    if (!it->is_regular_file() || it->path().extension() == ".tar") continue;
    scan(fsutil::read_file(it->path()), it->path().string());
  }
  for (const auto& a : api_dumps) scan(a, "API response");
  for (const auto& p : proc_dumps) scan(p, "daemon command line or environment");
  o.summary = "5 distinct keys, stale keys rejected, 0640 group " + std::string("secgroup") +
              "; scanned " + std::to_string(scanned) + " files/responses, " + std::to_string(hits) +
              " secret occurrences; revocation INCOMPLETE then COMPLETE";
  return o;
}

// ---- Authorization matrix ----------------------------------------------------

enum class Cls { Ok, Usage, Perm, Wrong, Resources, Internal };

const char* cls_name(Cls c) {
  switch (c) {
    case Cls::Ok: return "ok";
    case Cls::Usage: return "usage";
    case Cls::Perm: return "permission";
    case Cls::Wrong: return "wrong-status";
    case Cls::Resources: return "resources";
    default: return "internal";
  }
}

Cls from_http(int status) {
  if (status >= 200 && status < 300) return Cls::Ok;
  if (status == 401 || status == 403) return Cls::Perm;
  if (status == 409) return Cls::Wrong;
  if (status == 503) return Cls::Resources;
  if (status == 400 || status == 404) return Cls::Usage;
  return Cls::Internal;
}

Cls from_exit(int code) {
  switch (code) {
    case 0: return Cls::Ok;
    case 2: return Cls::Usage;
    case 3: return Cls::Perm;
    case 4: return Cls::Wrong;
    case 5: return Cls::Resources;
    default: return Cls::Internal;
  }
}

Outcome authorization_matrix() {
  Outcome o;
  testing::TestEnv env(4, "acc-authz");
  testing::ServeProcess serve(env.write_service_config(), env.root());
  const std::string db = "mx";
  struct Role {
    std::string user;
    bool admin;
    bool member;
  };
  const std::vector<Role> roles{{"alice", true, true}, {"root", true, false}, {"bob", false, true},
                                {"carol", false, false}};
  const std::vector<std::string> ops{"create", "restore", "start",   "stop",
                                     "checkpoint", "list", "view", "key"};

  auto as = [&](const std::string& user) {
    gateway::HttpClient c(serve.url());
    c.login(user);
    return c;
  };
  auto admin = as("alice");
  admin.call("POST", "/databases", {{"engine", "toy-kv"}, {"num_nodes", 1}, {"name", db}, {"group", "secgroup"}});
  auto current = [&] { return admin.call("GET", "/databases/" + db)["status"].value("value", ""); };
  auto settle = [&] {
    auto deadline = Clock::now() + 120s;
    while (Clock::now() < deadline) {
      auto s = current();
      if (s == "stopped" || s == "started") return s;
      std::this_thread::sleep_for(20ms);
    }
    return std::string("unsettled");
  };
  auto ensure = [&](const std::string& want) {
    auto s = settle();
    if (s == want) return;
    admin.send("POST", "/databases/" + db + "/actions", {{"action", want == "started" ? "start" : "stop"}});
    if (settle() != want) throw Error(Errc::Internal, "cannot bring " + db + " to " + want);
  };
  ensure("started");
  ensure("stopped");
  auto checkpoint = admin.call("POST", "/databases/" + db + "/actions", {{"action", "checkpoint"}});
  std::string cp = checkpoint["checkpoint"].value("id", "");
  settle();

  auto expected = [](const Role& r, const std::string& op, const std::string& st) {
    bool stopped = st == "stopped";
    if (op == "create") return r.admin ? Cls::Ok : Cls::Perm;
    if (op == "restore") return !r.admin ? Cls::Perm : stopped ? Cls::Ok : Cls::Wrong;
    if (op == "start" || op == "checkpoint") return !r.member ? Cls::Perm : stopped ? Cls::Ok : Cls::Wrong;
    if (op == "stop") return !r.member ? Cls::Perm : stopped ? Cls::Wrong : Cls::Ok;
    if (op == "list") return Cls::Ok;
    return r.member ? Cls::Ok : Cls::Perm;  // view, key
  };

  int counter = 0, cells = 0, agree = 0;
  for (const std::string st : {"stopped", "started"}) {
    for (const auto& role : roles) {
      for (const auto& op : ops) {
        ++cells;
        // HTTP
        ensure(st);
        auto c = as(role.user);
        gateway::HttpResponse r;
        std::string fresh = "mx" + std::to_string(++counter);
        if (op == "create") {
          r = c.send("POST", "/databases", {{"engine", "toy-kv"}, {"num_nodes", 1}, {"name", fresh}, {"group", "secgroup"}});
        } else if (op == "restore") {
          r = c.send("POST", "/databases/" + db + "/restore", {{"checkpoint", cp}});
        } else if (op == "start" || op == "stop" || op == "checkpoint") {
          r = c.send("POST", "/databases/" + db + "/actions", {{"action", op}});
        } else if (op == "list") {
          r = c.send("GET", "/databases");
        } else if (op == "view") {
          r = c.send("GET", "/databases/" + db);
        } else {
          r = c.send("GET", "/databases/" + db + "/accesskey");
        }
        Cls http_cls = from_http(r.status);
        bool http_visible = false;
        if (op == "list" && r.body.is_array()) {
          for (const auto& row : r.body) http_visible |= row.value("name", "") == db;
        }
        settle();

        // CLI
        ensure(st);
        std::vector<std::string> argv{testing::cli_path().string(), "--url", serve.url(), "--as-user", role.user};
        std::string fresh2 = "mx" + std::to_string(++counter);
        if (op == "create") {
          argv.insert(argv.end(), {"db_create", "toy-kv", "-n", "1", fresh2, "secgroup"});
        } else if (op == "restore") {
          argv.insert(argv.end(), {"db_restore", db, cp});
        } else if (op == "start" || op == "stop" || op == "checkpoint") {
          argv.insert(argv.end(), {"db_" + op, db, "--no-wait"});
        } else if (op == "list") {
          argv.insert(argv.end(), {"db_status", "--json"});
        } else if (op == "view") {
          argv.insert(argv.end(), {"db_status", db});
        } else {
          argv.insert(argv.end(), {"db_key", db});
        }
        auto p = testing::run_process(argv);
        Cls cli_cls = from_exit(p.exit_code);
        bool cli_visible = false;
        if (op == "list" && p.exit_code == 0) {
          for (const auto& row : nlohmann::json::parse(p.out)) cli_visible |= row.value("name", "") == db;
        }
        settle();

        Cls want = expected(role, op, st);
        std::string cell = role.user + "/" + op + "/" + st;
        bool ok = http_cls == want && cli_cls == want;
        if (op == "list") ok = ok && http_visible == role.member && cli_visible == role.member;
        agree += http_cls == cli_cls;
        o.require(ok, cell + ": expected " + cls_name(want) + ", HTTP " + std::to_string(r.status) +
                          " (" + cls_name(http_cls) + "), CLI exit " + std::to_string(p.exit_code) +
                          " (" + cls_name(cli_cls) + ")");
      }
    }
  }
  o.require(agree == cells, std::to_string(cells - agree) + " cells where CLI and HTTP disagree");
  ensure("stopped");
  serve.terminate();
  o.summary = std::to_string(cells) + " cells (" + std::to_string(roles.size()) + " roles x " +
              std::to_string(ops.size()) + " operations x 2 statuses), CLI/HTTP agree on " +
              std::to_string(agree);
  return o;
}

struct Criterion {
  std::string name;
  std::function<Outcome()> run;
};

}  // namespace
}  // namespace dbm::acceptance

int main(int argc, char** argv) {
  using namespace dbm::acceptance;
  CLI::App app{"Acceptance checks"};
  std::vector<std::string> only;
  int hook_trials = 200, copy_trees = 50, dns_sequences = 100;
  app.add_option("--only", only, "Run only these criteria");
  app.add_option("--hook-trials", hook_trials);
  app.add_option("--copy-trees", copy_trees);
  app.add_option("--dns-sequences", dns_sequences);
  CLI11_PARSE(app, argc, argv);

  std::vector<Criterion> criteria{
      {"lifecycle", lifecycle_conformance},
      {"now-semantics", now_semantics},
      {"hook-uninterruptibility", [&] { return hook_uninterruptibility(hook_trials); }},
      {"copy-engine", [&] { return copy_engine(copy_trees); }},
      {"dns", [&] { return dns_conformance(dns_sequences); }},
      {"security", security_model},
      {"authorization-matrix", authorization_matrix},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.name) == only.end()) continue;
    auto t0 = Clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    double secs = seconds_since(t0);
    std::printf("%s %-24s %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", c.name.c_str(),
                o.summary.c_str(), secs);
    for (const auto& f : o.failures) std::printf("     - %s\n", f.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
