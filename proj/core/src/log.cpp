// Copyright 2026 The lorascore Authors
// SPDX-License-Identifier: Apache-2.0

#include "lorascore/log.hpp"

#include <iostream>
#include <mutex>

namespace lorascore::log {
namespace {

std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

Sink& current_sink() {
  static Sink sink;
  return sink;
}

}  // namespace

Sink set_warning_sink(Sink sink) {
  std::lock_guard<std::mutex> lock(sink_mutex());
  Sink previous = std::move(current_sink());
  current_sink() = std::move(sink);
  return previous;
}

void warn(std::string_view message) {
  std::lock_guard<std::mutex> lock(sink_mutex());
  if (current_sink()) {
    current_sink()(message);
  } else {
    std::cerr << "warning: " << message << '\n';
  }
}

WarningCapture::WarningCapture() {
  previous_ = set_warning_sink([this](std::string_view m) { messages_.emplace_back(m); });
}

WarningCapture::~WarningCapture() { set_warning_sink(std::move(previous_)); }

bool WarningCapture::contains(std::string_view fragment) const {
  for (const auto& m : messages_) {
    if (m.find(fragment) != std::string::npos) return true;
  }
  return false;
}

}  // namespace lorascore::log
