#pragma once

#include <string>

#include "pdranpg/io.hpp"

namespace testutil {

inline std::string data_path(const std::string& name) {
  return std::string(PDRANPG_DATA_DIR) + "/" + name;
}

inline pdranpg::cmdp_document<double> load(const std::string& name) {
  return pdranpg::load_cmdp<double>(data_path(name));
}

}  // namespace testutil
