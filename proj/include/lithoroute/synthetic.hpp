#pragma once

#include <cstdint>
#include <string>

namespace lithoroute {

// Deterministic stand-in for the public Facies benchmark: 7 wells, 3,164
// depth samples, 9 lithology classes, 7 feature channels at 0.5 m spacing,
// with the same column names a real export carries.
std::string demo_facies_csv(std::uint64_t seed);

std::string demo_mapping_text();
std::string demo_knowledge_base_text();
std::string demo_config_text(const std::string& dir);

// Writes demo.csv, mapping.conf, kb.txt, guidelines.txt, pipeline.conf.
void write_demo_workspace(const std::string& dir, std::uint64_t seed);

}  // namespace lithoroute
