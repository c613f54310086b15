#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "commands.hpp"
#include "server.hpp"

int main(int argc, char** argv) {
  CLI::App app{"HTTP session API for interactive shell decomposition", "dec3d-server"};
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string table_path = shelldec::cli::default_table_path();
  app.add_option("--host", host, "address to bind");
  app.add_option("--port", port, "port to listen on");
  app.add_option("--table", table_path, "scattering table file");
  CLI11_PARSE(app, argc, argv);

  std::vector<shelldec::ScatteringFactor> table;
  try {
    table = shelldec::load_scattering_table_file(table_path);
  } catch (const std::exception& e) {
    std::cerr << "dec3d-server: " << e.what() << '\n';
    return 3;
  }
  shelldec::service::Service service(std::move(table));
  httplib::Server server;
  shelldec::service::install_routes(server, service);
  std::cout << "listening on " << host << ':' << port << std::endl;
  if (!server.listen(host, port)) {
    std::cerr << "dec3d-server: cannot listen on " << host << ':' << port << '\n';
    return 3;
  }
  return 0;
}
