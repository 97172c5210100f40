// Writes the built-in persona table, noise lexicon and synonym table as
// JSON, for regenerating the files under data/.

#include <fstream>
#include <iostream>
#include <string>

#include "dxenv/judge.hpp"
#include "dxenv/noise_engine.hpp"
#include "dxenv/patient_sim.hpp"

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: dxenv_dump_defaults <personas|lexicon|synonyms>\n";
    return 2;
  }
  const std::string what = argv[1];
  dxenv::Json j;
  if (what == "personas") {
    j = dxenv::PersonaTable::defaults().to_json();
  } else if (what == "lexicon") {
    j = dxenv::NoiseLexicon::defaults();
  } else if (what == "synonyms") {
    j = dxenv::SynonymTable::defaults().to_json();
  } else {
    std::cerr << "unknown table " << what << "\n";
    return 2;
  }
  std::cout << j.dump(2) << "\n";
  return 0;
}
