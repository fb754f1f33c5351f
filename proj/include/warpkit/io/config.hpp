#pragma once

#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include "warpkit/common.hpp"

namespace warpkit {

// Flat UTF-8 `key = value` config with `#` comments.
// Duplicate keys: last one wins, with a warning on stderr.
class Config {
  public:
    Config() = default;

    static Config parse(std::istream& is, const std::string& origin = "<config>") {
        Config cfg;
        std::string line;
        int lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            std::string trimmed = trim(line);
            if (trimmed.empty()) continue;
            auto eq = trimmed.find('=');
            require(eq != std::string::npos,
                    origin + ":" + std::to_string(lineno) + ": expected `key = value`");
            std::string key = trim(trimmed.substr(0, eq));
            std::string value = trim(trimmed.substr(eq + 1));
            require(!key.empty(), origin + ":" + std::to_string(lineno) + ": empty key");
            if (cfg.values_.count(key))
                std::cerr << "warning: " << origin << ":" << lineno << ": duplicate key '" << key
                          << "', last value wins\n";
            cfg.values_[key] = value;
        }
        return cfg;
    }

    static Config load(const std::string& path) {
        std::ifstream is(path);
        require(is.good(), "Config::load: cannot open " + path);
        return parse(is, path);
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string get_str(const std::string& key, const std::string& def = "") const {
        auto it = values_.find(key);
        return it == values_.end() ? def : it->second;
    }

    long get_int(const std::string& key, long def) const {
        auto it = values_.find(key);
        if (it == values_.end()) return def;
        try {
            return std::stol(it->second);
        } catch (const std::exception&) {
            fail("Config: key '" + key + "' is not an integer: " + it->second);
        }
    }

    double get_double(const std::string& key, double def) const {
        auto it = values_.find(key);
        if (it == values_.end()) return def;
        try {
            return std::stod(it->second);
        } catch (const std::exception&) {
            fail("Config: key '" + key + "' is not a number: " + it->second);
        }
    }

    const std::map<std::string, std::string>& values() const { return values_; }

  private:
    static std::string trim(const std::string& s) {
        auto b = s.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) return "";
        auto e = s.find_last_not_of(" \t\r\n");
        return s.substr(b, e - b + 1);
    }

    std::map<std::string, std::string> values_;
};

}  // namespace warpkit
