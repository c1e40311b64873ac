#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>

#include <sys/wait.h>

#include "monosoup/checkpoint_io.hpp"
#include "monosoup/merge.hpp"

namespace monosoup {

namespace detail {

inline std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') out += "'\\''";
    else out += c;
  }
  return out + "'";
}

inline void replace_all(std::string& s, const std::string& from, const std::string& to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
}

}  // namespace detail

/// Scores a soup by running a shell command. "{soup}" in the template is
/// replaced by the path of the tentative soup (written to `scratch_dir`) and
/// "{ids}" by the comma-joined sorted member ids. The command must print a
/// single finite number on standard output and exit 0.
inline Evaluator command_evaluator(std::string command_template, std::filesystem::path scratch_dir) {
  return [tmpl = std::move(command_template), dir = std::move(scratch_dir)](
             const std::vector<std::string>& ids, const std::function<const Checkpoint&()>& soup) {
    const auto digest = id_set_digest(ids);
    std::string cmd = tmpl;
    std::filesystem::path soup_path;
    if (cmd.find("{soup}") != std::string::npos) {
      soup_path = dir / ("soup-" + std::to_string(::getpid()) + ".safetensors");
      write_archive(soup(), soup_path);
      detail::replace_all(cmd, "{soup}", detail::shell_quote(soup_path.string()));
    }
    detail::replace_all(cmd, "{ids}", detail::shell_quote(digest));

    std::string output;
    FILE* pipe = ::popen(cmd.c_str(), "r");
    if (!pipe) fail(ErrorCode::EvaluatorFailure, "cannot launch evaluator for {" + digest + "}");
    std::array<char, 256> buf{};
    while (std::fgets(buf.data(), static_cast<int>(buf.size()), pipe)) output += buf.data();
    const int status = ::pclose(pipe);
    if (!soup_path.empty()) {
      std::error_code ec;
      std::filesystem::remove(soup_path, ec);
    }
    if (status == -1 || !WIFEXITED(status) || WEXITSTATUS(status) != 0) {
      fail(ErrorCode::EvaluatorFailure, "evaluator exited abnormally for {" + digest + "}");
    }
    const auto first = output.find_first_not_of(" \t\r\n");
    const auto last = output.find_last_not_of(" \t\r\n");
    if (first == std::string::npos) fail(ErrorCode::EvaluatorFailure, "evaluator printed nothing for {" + digest + "}");
    const std::string text = output.substr(first, last - first + 1);
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(value)) {
      fail(ErrorCode::EvaluatorFailure, "evaluator output '" + text + "' is not a single finite number");
    }
    return value;
  };
}

}  // namespace monosoup
