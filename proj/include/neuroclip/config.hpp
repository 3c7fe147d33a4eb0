#pragma once

// Run configuration: flat `key = value` text, '#' comments, dotted keys
// for grouping (e.g. "synth.fs_eeg = 250").

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace neuroclip {

class Config {
  public:
    Config() = default;
    static Config from_file(const std::string& path);
    static Config from_string(const std::string& text);

    void set(const std::string& key, const std::string& value);
    bool has(const std::string& key) const;

    std::string get_string(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& def) const;
    double get_double(const std::string& key) const;
    double get_double(const std::string& key, double def) const;
    long get_int(const std::string& key) const;
    long get_int(const std::string& key, long def) const;
    bool get_bool(const std::string& key) const;
    bool get_bool(const std::string& key, bool def) const;
    std::vector<double> get_doubles(const std::string& key) const;  // comma-separated
    std::vector<std::string> get_strings(const std::string& key) const;

    const std::map<std::string, std::string>& entries() const { return kv_; }

  private:
    std::map<std::string, std::string> kv_;
};

}  // namespace neuroclip
