// Copyright 2026 The filmdiar Authors
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

// Shared fixture data for the unit and acceptance suites.

#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include "filmdiar/analysis.hpp"

namespace filmdiar::testing {

inline std::string fixture_path(const std::string &relative) {
  return std::string(FILMDIAR_FIXTURES) + "/" + relative;
}

inline std::string slurp(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Dossier behind golden_prompt.txt.
inline SpeakerDossier golden_dossier() {
  SpeakerDossier d;
  d.speaker = "spk0";
  d.utterances = {
      {TimeInterval(12.0, 15.5), "Ich habe dem Herzog mein Wort gegeben."},
      {TimeInterval(3.25, 6.0), "Guten Abend, meine Herren."},
      {TimeInterval(40.0, 44.0), "Morgen reisen wir nach Stuttgart."},
  };
  d.total_speech_s = 10.25;
  d.segment_count_over_min = 3;
  return d;
}

/// system, separator, user, separator, hash
inline std::string golden_rendering(const RenderedPrompt &p) {
  return p.system_text + "\n-----\n" + p.user_text + "\n-----\n" + p.prompt_hash + "\n";
}

}  // namespace filmdiar::testing
