// Copyright 2026 The lorascore Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace lorascore::tsv {

std::vector<std::string> split(std::string_view line);
// Backslash escapes for \t, \n, \r and \\ so any string fits in one field.
std::string escape(std::string_view field);
std::string unescape(std::string_view field);
// Splits text into lines, accepting \n or \r\n endings; a final empty line is dropped.
std::vector<std::string_view> lines(std::string_view text);
std::string join(const std::vector<std::string>& fields);

}  // namespace lorascore::tsv
