// Copyright 2026 The ScoreAD Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "scoread/numerics.hpp"
#include "scoread/rng.hpp"

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

namespace scoread::testing {

// Fresh directory under the system temp dir, removed on scope exit.
class TempDir {
  public:
    explicit TempDir(const std::string& tag) {
        SeededRng rng(static_cast<std::uint64_t>(std::hash<std::string>{}(tag)),
                      static_cast<std::uint64_t>(::getpid()));
        path_ = std::filesystem::temp_directory_path() / ("scoread_" + tag + "_" + std::to_string(rng.next_u64() % 1000000007u));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

  private:
    std::filesystem::path path_;
};

inline std::vector<char> read_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_bytes(const std::filesystem::path& p, const std::vector<unsigned char>& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << text;
}

inline DenseMatrix random_matrix(Index rows, Index cols, SeededRng& rng) {
    DenseMatrix m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) {
        m.data()[i] = rng.normal();
    }
    return m;
}

inline std::vector<double> random_vector(std::size_t n, SeededRng& rng) {
    std::vector<double> v(n);
    rng.fill_normal(v);
    return v;
}

}  // namespace scoread::testing
