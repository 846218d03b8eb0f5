// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "screenflow/workflow.hpp"

namespace screenflow {

// Line-oriented workflow description:
//
//   workflow <name>
//   pool <name> <slots>
//   task <id> pool=<pool> [group=<gid>] action=<shell:"cmd"|sim:<dist>|builtin:<step>>
//        [produces=<key>] [param="<template>"]... [returns=<type>:<template>]
//   group <gid> [mapped_over=<task>[.<key>]]
//   dep <id> -> <id>
//
// `#` starts a comment; values may be double-quoted with `\"` and `\\`.
// Throws ParseError with the offending line number.
WorkflowSpec parse_workflow(std::string_view text);
WorkflowSpec parse_workflow_file(const std::filesystem::path& path);

/// Parses a `<dist>` body such as `uniform:10:20*2!fail=3`.
DurationSpec parse_duration(std::string_view text);
std::string format_duration(const DurationSpec& d);

/// Canonical text form; parse_workflow(format_workflow(s)) == s.
std::string format_workflow(const WorkflowSpec& spec);

}  // namespace screenflow
