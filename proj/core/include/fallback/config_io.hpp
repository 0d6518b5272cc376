#pragma once

// Small helpers over Boost.PropertyTree for the INI-style run configuration.

#include <array>
#include <cstddef>
#include <sstream>
#include <string>

#include <boost/property_tree/ptree.hpp>

#include "fallback/intersection_env.hpp"

namespace fallback::config {

using Tree = boost::property_tree::ptree;

Tree read_ini_file(const std::string& path);
void write_ini(std::ostream& out, const Tree& tree);

std::string format_double(double v);

template <typename T>
void read_value(const Tree& section, const std::string& key, T& value) {
  if (const auto node = section.get_child_optional(key)) {
    try {
      value = node->get_value<T>();
    } catch (const boost::property_tree::ptree_error&) {
      throw ConfigError("cannot parse value for key '" + key + "': '" + node->data() + "'");
    }
  }
}

// Comma-separated list; missing trailing entries keep their prior value.
template <std::size_t N>
void read_list(const Tree& section, const std::string& key, std::array<double, N>& values) {
  const auto node = section.get_child_optional(key);
  if (!node) return;
  std::stringstream ss(node->data());
  std::string item;
  std::size_t i = 0;
  while (std::getline(ss, item, ',')) {
    if (i >= N) throw ConfigError("too many entries for key '" + key + "'");
    try {
      std::size_t used = 0;
      values[i] = std::stod(item, &used);
    } catch (const std::exception&) {
      throw ConfigError("cannot parse list entry '" + item + "' for key '" + key + "'");
    }
    ++i;
  }
}

template <std::size_t N>
std::string format_list(const std::array<double, N>& values, std::size_t count = N) {
  std::string out;
  for (std::size_t i = 0; i < count && i < N; ++i) {
    if (i) out += ", ";
    out += format_double(values[i]);
  }
  return out;
}

}  // namespace fallback::config
