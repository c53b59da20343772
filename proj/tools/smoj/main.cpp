// SPDX-License-Identifier: Apache-2.0
#include <csignal>
#include <iostream>
#include <string>
#include <vector>

#include "cli.hpp"

int main(int argc, char** argv) {
  // Long-running subcommands wait for these with sigwait; block them before
  // any thread starts so they are delivered to the waiting thread only.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  const std::vector<std::string> args(argv + 1, argv + argc);
  return smoj::cli::run(args, std::cout, std::cerr, smoj::cli::process_env());
}
