// Copyright 2026 EINet Authors
// Flat key=value experiment configuration with profile defaults and
// documented keys. Precedence: defaults < config file < overrides.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <map>
#include <string>
#include <vector>

#include "einet/common.hpp"

namespace einet::config {

class Config {
public:
    // defaults for a named profile: tiny, desk, full
    static Config defaults(const std::string& profile = "desk");

    void load_file(const std::string& path);            // overrides current values
    void set(const std::string& key, const std::string& value);  // key must be documented
    void set_unchecked(const std::string& key, const std::string& value);

    bool has(const std::string& key) const { return kv_.count(key) != 0; }
    std::string get_str(const std::string& key) const;
    double get_double(const std::string& key) const;
    int get_int(const std::string& key) const;
    bool get_bool(const std::string& key) const;

    // resolved "key=value" lines, key-sorted; also the serialization format
    std::vector<std::string> lines() const;
    std::string text() const;
    static Config from_text(const std::string& text);

    bool operator==(const Config& o) const { return kv_ == o.kv_; }
    // keys whose values differ, for resume-mismatch reporting
    std::vector<std::string> diff(const Config& o) const;

private:
    std::map<std::string, std::string> kv_;
};

}  // namespace einet::config
