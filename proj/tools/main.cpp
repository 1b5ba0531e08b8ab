// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The embedrl Authors

#include <iostream>
#include <string>
#include <vector>

#include "cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return embedrl::cli::run(std::move(args), std::cout, std::cerr);
}
