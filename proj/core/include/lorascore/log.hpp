// Copyright 2026 The lorascore Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace lorascore::log {

using Sink = std::function<void(std::string_view)>;

// Warnings go to stderr unless a sink is installed. Returns the previous sink.
Sink set_warning_sink(Sink sink);
void warn(std::string_view message);

// RAII capture used by tests and by callers that surface warnings in reports.
class WarningCapture {
 public:
  WarningCapture();
  ~WarningCapture();
  WarningCapture(const WarningCapture&) = delete;
  WarningCapture& operator=(const WarningCapture&) = delete;

  const std::vector<std::string>& messages() const { return messages_; }
  bool contains(std::string_view fragment) const;

 private:
  std::vector<std::string> messages_;
  Sink previous_;
};

}  // namespace lorascore::log
