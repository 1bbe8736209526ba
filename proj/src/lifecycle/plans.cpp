#include "lifecycle/plans.hpp"

#include <thread>

#include "common/error.hpp"
#include "common/fsutil.hpp"

namespace dbm::lifecycle {
namespace {

void maybe_pause(const PlanContext& ctx, const clustersim::NodeContext& node,
                 std::string_view step) {
  if (node.is_master() && ctx.pause_after_step && *ctx.pause_after_step == step) {
    for (;;) std::this_thread::sleep_for(std::chrono::hours(1));
  }
}

void copy_paths(const fs::path& from_root, const fs::path& to_root,
                const std::vector<std::string>& paths, migrate::CopyMode mode,
                migrate::Direction direction) {
  migrate::CopyOptions opts;
  opts.direction = direction;
  for (const auto& rel : paths) {
    auto src = from_root / rel;
    if (!fs::exists(src)) continue;
    auto dst = to_root / rel;
    fs::create_directories(dst.parent_path());
    migrate::copy_tree(src, dst, mode, opts);
  }
}

/// Copies a local subtree next to its central counterpart, then swaps it in,
/// so a failed copy never leaves central storage half-written.
void copy_back(const fs::path& local, const fs::path& central, const std::string& rel,
               migrate::CopyMode mode) {
  auto src = local / rel;
  if (!fs::exists(src)) return;
  auto dst = central / rel;
  auto incoming = dst;
  incoming += ".incoming";
  auto old = dst;
  old += ".old";
  std::error_code ec;
  fs::remove_all(incoming, ec);
  fs::remove_all(old, ec);
  fs::create_directories(dst.parent_path());
  migrate::CopyOptions opts;
  opts.direction = migrate::Direction::LocalToCentral;
  migrate::copy_tree(src, incoming, mode, opts);
  if (fs::exists(dst)) fs::rename(dst, old);
  fs::rename(incoming, dst);
  fs::remove_all(old, ec);
}

}  // namespace

void PlanContext::note(const std::string& message) {
  std::lock_guard lk(mu_);
  notes_.push_back(message);
}

std::vector<std::string> PlanContext::notes() const {
  std::lock_guard lk(mu_);
  return notes_;
}

fs::path local_db_dir(const clustersim::SimNode& node, const std::string& db) {
  return node.local_root / db;
}

std::vector<std::string> dns_names(const std::string& db, int index) {
  std::vector<std::string> out{db + "-" + std::to_string(index)};
  if (index == 0) out.push_back(db);
  return out;
}

clustersim::NodeHook make_start_plan(std::shared_ptr<PlanContext> ctx) {
  return [ctx](clustersim::NodeContext& node) {
    const auto& db = ctx->db;
    auto local = local_db_dir(node.node(), db.name);
    auto runner = [&node](std::string_view name, const std::function<void()>& fn) {
      node.step(name, fn);
    };
    bool services_attempted = false;
    try {
      node.step("RegisterDns", [&] {
        for (const auto& name : dns_names(db.name, node.index())) {
          ctx->dns->upsert(name, node.node().ip);
        }
      });
      maybe_pause(*ctx, node, "RegisterDns");

      node.step("CopyCentralToLocal", [&] {
        std::error_code ec;
        fs::remove_all(local, ec);
        fs::create_directories(local);
        copy_paths(db.central_path, local, engines::node_inbound_paths(db.engine, node.index()),
                   ctx->copy_mode, migrate::Direction::CentralToLocal);
        if (ctx->after_copy) ctx->after_copy(node.index(), local);
      });
      maybe_pause(*ctx, node, "CopyCentralToLocal");

      services_attempted = true;
      node.step("StartServices", [&] {
        ctx->run->start_node(node.index(), node.node().ip, local, runner);
        ctx->run->check_health(node.index());
      });
      maybe_pause(*ctx, node, "StartServices");

      if (node.is_master()) {
        node.step("RotateAccessKey", [&] {
          ctx->run->wait_all_started();
          auto su = ctx->credentials->superuser(db.name, db.central_path);
          ctx->credentials->rotate_access_key(
              db.name, db.security_group, [&](const std::string& value) {
                engines::EngineClient client(ctx->client);
                client.set_password(security::kAccessUserName, value, su.value);
              });
        });
        maybe_pause(*ctx, node, "RotateAccessKey");
      }

      node.step("MarkStarted", [&] {
        fs::create_directories(local / "run");
        fsutil::write_file_atomic(local / "run/started", node.job_id() + "\n");
      });
    } catch (...) {
      if (!services_attempted) ctx->run->abandon_node(node.index());
      throw;
    }
  };
}

clustersim::NodeHook make_stop_plan(std::shared_ptr<PlanContext> ctx) {
  return [ctx](clustersim::NodeContext& node) {
    const auto& db = ctx->db;
    auto local = local_db_dir(node.node(), db.name);
    auto runner = [&node](std::string_view name, const std::function<void()>& fn) {
      node.step(name, fn);
    };
    std::exception_ptr first_error;
    auto attempt = [&](const char* step, const std::function<void()>& fn) {
      try {
        node.step(step, fn);
      } catch (...) {
        if (!first_error) first_error = std::current_exception();
      }
    };

    attempt("StopServices", [&] {
      for (const auto& a : ctx->run->stop_node(node.index(), runner)) ctx->note(a);
    });

    // Only nodes whose services ran can hold newer data than central storage.
    attempt("CopyLocalToCentral", [&] {
      if (ctx->run->node_had_services(node.index())) {
        for (const auto& rel : engines::node_outbound_paths(db.engine, node.index())) {
          copy_back(local, db.central_path, rel, ctx->copy_mode);
        }
      }
      std::error_code ec;
      fs::remove_all(local, ec);
    });

    attempt("DeregisterDns", [&] {
      for (const auto& name : dns_names(db.name, node.index())) ctx->dns->remove(name);
    });

    attempt("MarkStopped", [] {});
    if (first_error) std::rethrow_exception(first_error);
  };
}

}  // namespace dbm::lifecycle
