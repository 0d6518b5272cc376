#include "fallback/config_io.hpp"

#include <charconv>
#include <fstream>

#include <boost/property_tree/ini_parser.hpp>

namespace fallback::config {

Tree read_ini_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  Tree tree;
  try {
    boost::property_tree::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(path + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  return tree;
}

void write_ini(std::ostream& out, const Tree& tree) { boost::property_tree::write_ini(out, tree); }

// Shortest representation that parses back to the same double.
std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace fallback::config
