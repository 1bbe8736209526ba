#include <unistd.h>

#include <cstdio>

#include <CLI11.hpp>

#include "engines/daemon.hpp"

int main(int argc, char** argv) {
  dbm::engines::DaemonOptions o;
  std::string dns = "127.0.0.1:5353";
  CLI::App app{"toy engine daemon"};
  app.add_option("--role", o.role, "zookeeper | coordinator | catalog | worker")->required();
  app.add_option("--db", o.database)->required();
  app.add_option("--bind", o.bind);
  app.add_option("--port", o.port)->required();
  app.add_option("--data", o.data_dir)->required();
  app.add_option("--secret-file", o.secret_file)->required();
  app.add_option("--superuser-file", o.superuser_file);
  app.add_option("--users-file", o.users_file);
  app.add_option("--dns", dns, "host:port of the DNS server");
  app.add_option("--peer", o.peer_fqdn);
  app.add_option("--peer-port", o.peer_port);
  try {
    app.parse(argc, argv);
    o.dns = dbm::dyndns::Endpoint::parse(dns);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::printf("FAIL InvalidArgument %s\n", e.what());
    return 2;
  }
  int rc = dbm::engines::run_daemon(o);
  std::fflush(nullptr);
  // Client threads may still be parked in blocking calls.
  _exit(rc);
}
