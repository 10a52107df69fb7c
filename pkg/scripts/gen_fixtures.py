"""Build the replay fixtures and golden files for the fixture corpus.

Run from the repository root:

    python3 scripts/gen_fixtures.py

The script authors a ten-document corpus, drives the real pipeline through a
scripted backend standing in for the model, and records every completion
into tests/data/replay.jsonl. Every golden file is asserted against the
hand-derived expectations written out in this file before it is frozen, so
the goldens never simply mirror whatever the pipeline happened to produce.
"""
from __future__ import annotations

import json
import shutil
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))

from litkg import datagen, evaluate, kg_pipeline, kg_store, rag  # noqa: E402
from litkg.corpus import full_text, ingest  # noqa: E402
from litkg.llm_gateway import FixtureStore, LlmGateway  # noqa: E402
from litkg.schema import load_schema  # noqa: E402

DATA = ROOT / "tests" / "data"
GOLDEN = DATA / "golden"

# ---------------------------------------------------------------- corpus

DOCS = [
    {
        "doc_id": "p01",
        "title": "Inverted Perovskite Solar Cells with Sputtered Tin Oxide",
        "authors": ["L. Chen", "M. Okafor"],
        "venue": "Journal of Photovoltaics",
        "year": 2021,
        "sections": [
            {"name": "Abstract", "text": "Inverted perovskite solar cells with a PEDOT:PSS hole transport layer and a sputtered SnO2 window electrode are reported. The device structure ITO/PEDOT:PSS/perovskite/PCBM/Ag yields a power conversion efficiency of 21.2 % with an open-circuit voltage of 1.08 V and a fill factor of 0.82."},
            {"name": "Methods", "text": "SnO2 layers were deposited by magnetron sputtering. The perovskite film was spin coated at 4000 rpm for 30 s and annealed at 100°C for 30 min on a hotplate before PCBM and silver were added."},
            {"name": "Results", "text": "Voltage losses shrink when the PEDOT:PSS surface is rinsed; the open-circuit voltage improves from 1.02 V to 1.08 V. HTL materials sharing deep HOMO levels support high photovoltage."},
        ],
        "cited_doc_ids": [],
    },
    {
        "doc_id": "p02",
        "title": "Spin-Coated Copper Oxide Interlayers Boost Efficiency",
        "authors": ["R. Gupta", "S. Lee"],
        "venue": "Energy Materials Letters",
        "year": 2021,
        "sections": [
            {"name": "Abstract", "text": "CuO interlayers deposited by spin coating boost the power conversion efficiency of perovskite solar cells to 23.4 %."},
            {"name": "Methods", "text": "The perovskite precursor was dissolved in Dimethylformamide (DMF) and stirred overnight. CuO was applied by spin coating from a nanoparticle ink."},
            {"name": "Results", "text": "Precursor solutions in DMF wet the substrate uniformly. SnO2 electron transport layers collect charge efficiently; ETL materials with high mobility reduce series resistance."},
        ],
        "cited_doc_ids": ["p01"],
    },
    {
        "doc_id": "p03",
        "title": "Thermally Evaporated Copper Oxide Contacts for Perovskite Devices",
        "authors": ["S. Lee", "T. Nakamura"],
        "venue": "Thin Film Advances",
        "year": 2022,
        "sections": [
            {"name": "Abstract", "text": "CuO rear contacts fabricated by thermal evaporation are compared with solution processing in inverted devices with a PEDOT:PSS hole transport layer."},
            {"name": "Methods", "text": "Perovskite films were spin coated at 5000 rpm with 100µl of solution, then annealed at 120°C for 10min. CuO was fabricated by thermal evaporation at 0.5 A/s."},
            {"name": "Results", "text": "Evaporated CuO contacts passivate interface traps and raise the open-circuit voltage. Trap densities drop by half."},
        ],
        "cited_doc_ids": ["p01", "p02"],
    },
    {
        "doc_id": "p04",
        "title": "Monolithic Tandem Cells with Atomic Layer Deposited Tin Oxide",
        "authors": ["A. Fernandez", "K. Osei", "J. Park"],
        "venue": "Solar Energy Express",
        "year": 2022,
        "sections": [
            {"name": "Abstract", "text": "Monolithic tandem cells using SnO₂ grown by atomic layer deposition reach a power conversion efficiency of 28.1 %, a fill factor of 0.88, an open-circuit voltage of 1.2 V, and a short-circuit current of 25 mA/cm2."},
            {"name": "Methods", "text": "The tandem stack ITO/SAM/perovskite/C60/BCP/Cu was completed with SnO₂ deposited by atomic layer deposition at 100°C."},
            {"name": "Results", "text": "The tandem cell keeps a high fill factor of 0.88 thanks to conformal contacts. Device structures reaching PCE over 25% are summarized in Table 1."},
        ],
        "cited_doc_ids": ["p01"],
    },
    {
        "doc_id": "p05",
        "title": "Chemical Bath Deposition of Tin Oxide with Potassium Iodide Additives",
        "authors": ["D. Novak", "P. Silva"],
        "venue": "Coatings Research",
        "year": 2020,
        "sections": [
            {"name": "Abstract", "text": "tin oxide (SnO2) films grown by chemical bath deposition serve as electron transport layers. Adding potassium iodide to the perovskite precursor suppresses hysteresis."},
            {"name": "Methods", "text": "The precursor used DMF as solvent. Potassium iodide was doped into the precursor at 1 mol%. SnO2 was fabricated by chemical bath deposition at 70°C."},
            {"name": "Results", "text": "Potassium iodide passivates halide vacancies; passivation materials of this family share mobile-ion trapping."},
        ],
        "cited_doc_ids": ["doi:10.1000/ext.2019"],
    },
    {
        "doc_id": "p06",
        "title": "Encapsulated Perovskite Modules with Copper Oxide Barriers",
        "authors": ["H. Zhao", "E. Martin"],
        "venue": "Module Engineering",
        "year": 2022,
        "sections": [
            {"name": "Abstract", "text": "Encapsulated modules with CuO barrier layers show strong stability. The stack glass/ITO/SnO2/perovskite/spiro-OMeTAD/Au survives damp heat."},
            {"name": "Methods", "text": "CuO barriers were laminated onto the encapsulated module under vacuum."},
            {"name": "Results", "text": "CuO improves thermal stability: modules retain 95% PCE after 1000h at 85°C. The encapsulated module survives 85% RH for 7 days in moisture testing. Moisture stability improves with hydrophobic barrier layers."},
        ],
        "cited_doc_ids": ["p03"],
    },
    {
        "doc_id": "p07",
        "title": "Stability of Encapsulated Perovskite Modules under Heat and Light",
        "authors": ["E. Martin", "B. Kaur"],
        "venue": "Module Engineering",
        "year": 2023,
        "sections": [
            {"name": "Abstract", "text": "Encapsulated modules stay stable to 85°C for 500h and keep 92% of performance after 500h of AM1.5G illumination."},
            {"name": "Methods", "text": "Annealing conditions for the barrier polymer follow the supplier recipe. Thermal cycling followed IEC 61215."},
            {"name": "Results", "text": "Light soaking shows 92% after 500h AM1.5G. Thermal stability improves with UV-filtering encapsulants; light stability improves likewise."},
        ],
        "cited_doc_ids": ["p06"],
    },
    {
        "doc_id": "p08",
        "title": "Copper Oxide Doping of Hole Transport Layers",
        "authors": ["F. Ibrahim", "G. Rossi"],
        "venue": "Interface Letters",
        "year": 2021,
        "sections": [
            {"name": "Abstract", "text": "Hole transport layers doped with CuO show higher conductivity and fewer interface traps."},
            {"name": "Methods", "text": "The hole transport layer was doped with CuO at 3 wt%."},
            {"name": "Results", "text": "CuO doping passivates deep traps at the HTL interface; passivation materials with Lewis-acid character behave similarly."},
        ],
        "cited_doc_ids": ["p05"],
    },
    {
        "doc_id": "p09",
        "title": "Moisture Resilience of Copper-Oxide-Modified Perovskite Films",
        "authors": ["J. Park", "W. Ito"],
        "venue": "Materials Durability",
        "year": 2023,
        "sections": [
            {"name": "Abstract", "text": "CuO-modified films resist humidity. CuO improves moisture stability with films lasting 80% RH for 30 days."},
            {"name": "Methods", "text": "Films were stored at 80% relative humidity and tracked by X-ray diffraction."},
            {"name": "Results", "text": "The work solves moisture-driven decomposition at grain boundaries. Hydrophobic CuO shells keep water out."},
        ],
        "cited_doc_ids": ["p06"],
    },
    {
        "doc_id": "p10",
        "title": "Flexible Perovskite Cells on Polymer Substrates",
        "authors": ["N. Petrov", "C. Alvarez"],
        "venue": "Flexible Electronics",
        "year": 2022,
        "sections": [
            {"name": "Abstract", "text": "Flexible cells on PET reach a power conversion efficiency of 19.6 % with an open-circuit voltage of 1.12 V."},
            {"name": "Methods", "text": "Low-temperature processing kept the polymer substrate below 120°C throughout."},
            {"name": "Results", "text": "The flexible cell keeps its open-circuit voltage high via interface dipole engineering; the short-circuit current improves with antireflection foils."},
        ],
        "cited_doc_ids": ["p04"],
    },
]

# ------------------------------------------------- filter and extraction

SUBONTOLOGY_NAME_TO_ID = {
    "Coating Parameter": "coating_parameter",
    "Method": "method",
    "Annealing Parameter": "annealing_parameter",
    "Solvent": "solvent",
    "Device Structure": "device_structure",
    "Additive": "additive",
    "Thermal Stability": "thermal_stability",
    "Light Stability": "light_stability",
    "Moisture Stability": "moisture_stability",
    "Fill Factor Value": "fill_factor_value",
    "Open-Circuit Voltage Value": "open_circuit_voltage_value",
    "Short-Circuit Current Value": "short_circuit_current_value",
    "Power Conversion Efficiency Value": "power_conversion_efficiency_value",
}

FILTER_TABLE = {
    "coating_parameter": {"p01", "p03", "p05"},
    "method": {"p01", "p02", "p03", "p04", "p05"},
    "annealing_parameter": {"p01", "p03", "p07"},
    "solvent": {"p02", "p05"},
    "device_structure": {"p01", "p04", "p06"},
    "additive": {"p05", "p08"},
    "thermal_stability": {"p06", "p07"},
    "light_stability": {"p07"},
    "moisture_stability": {"p06", "p09"},
    "fill_factor_value": {"p01", "p04"},
    "open_circuit_voltage_value": {"p01", "p04", "p10"},
    "short_circuit_current_value": {"p04"},
    "power_conversion_efficiency_value": {"p01", "p02", "p04", "p10"},
}


def _arr(*findings: tuple[str, str, str]) -> str:
    return json.dumps(
        [{"subject": s, "relation": r, "value": v} for s, r, v in findings],
        ensure_ascii=False, indent=2,
    )


def _fenced(payload: str) -> str:
    return f"Here is what I found:\n```json\n{payload}\n```"


EXTRACTION_REPLIES = {
    ("coating_parameter", "p01"): _arr(("perovskite film", "spin_coated_at", "4000 rpm, 30s")),
    ("coating_parameter", "p03"): _fenced(_arr(("perovskite film", "coating_condition_is", "5000 rpm, 100µl"))),
    ("coating_parameter", "p05"): "Not mentioned.",
    ("method", "p01"): _arr(
        ("inverted device", "uses_htl", "PEDOT:PSS"),
        ("SnO2", "fabricated_by", "sputtering"),
    ),
    ("method", "p02"): _arr(("CuO", "fabricated_by", "spin coating")),
    ("method", "p03"): _arr(
        ("CuO", "fabricated_by", "thermal evaporation"),
        ("Inverted device", "hole_transport_layer_is", "PEDOT:PSS"),
    ),
    ("method", "p04"): _arr(("SnO₂", "fabricated_by", "atomic layer deposition")),
    ("method", "p05"): _fenced(_arr(("tin oxide (SnO2)", "fabricated_by", "chemical bath deposition"))),
    ("annealing_parameter", "p01"): _arr(("perovskite film", "annealed_at", "100°C, 30min")),
    ("annealing_parameter", "p03"): '{"value": "120°C, 10min"}',
    ("annealing_parameter", "p07"): "garbage{{",
    ("solvent", "p02"): _arr(("perovskite precursor", "uses_solvent", "Dimethylformamide (DMF)")),
    ("solvent", "p05"): _arr(("perovskite precursor", "solvent_is", "DMF")),
    ("device_structure", "p01"): _arr(("inverted device", "has_device_structure", "ITO/PEDOT:PSS/perovskite/PCBM/Ag")),
    ("device_structure", "p04"): _arr(("tandem cell", "has_device_structure", "ITO/SAM/perovskite/C60/BCP/Cu")),
    ("device_structure", "p06"): _arr(("encapsulated module", "has_device_structure", "glass/ITO/SnO2/perovskite/spiro-OMeTAD/Au")),
    ("additive", "p05"): _arr(("perovskite precursor", "doped_with", "potassium iodide")),
    ("additive", "p08"): _arr(("hole transport layer", "doped_with", "CuO")),
    ("thermal_stability", "p06"): _arr(("CuO", "improves_thermal_stability", "retains 95% PCE after 1000h at 85°C")),
    ("thermal_stability", "p07"): _arr(("encapsulated module", "has_thermal_stability", "stable to 85°C for 500h")),
    ("light_stability", "p07"): _arr(("encapsulated module", "has_light_stability", "92% after 500h AM1.5G")),
    ("moisture_stability", "p06"): _arr(("encapsulated module", "has_moisture_stability", "survives 85% RH, 7 days")),
    ("moisture_stability", "p09"): _arr(("CuO", "improves_moisture_stability", "80% RH for 30 days")),
    ("fill_factor_value", "p01"): _arr(("inverted device", "has_fill_factor", "0.82")),
    ("fill_factor_value", "p04"): _arr(
        ("tandem cell", "has_fill_factor", "0.88"),
        ("reference cell", "has_fill_factor", "high"),
    ),
    ("open_circuit_voltage_value", "p01"): _arr(("inverted device", "has_open_circuit_voltage", "1.08 V")),
    ("open_circuit_voltage_value", "p04"): _arr(("tandem cell", "has_open_circuit_voltage", "1.2 V")),
    ("open_circuit_voltage_value", "p10"): _arr(("flexible cell", "has_open_circuit_voltage", "1.12 V")),
    ("short_circuit_current_value", "p04"): _arr(("tandem cell", "has_short_circuit_current", "25 mA/cm2")),
    ("power_conversion_efficiency_value", "p01"): _arr(("inverted device", "has_power_conversion_efficiency", "21.2 %")),
    ("power_conversion_efficiency_value", "p02"): _arr(("CuO", "boosts_power_conversion_efficiency", "23.4 %")),
    ("power_conversion_efficiency_value", "p04"): _arr(("tandem cell", "achieves_pce", "28.1 %")),
    ("power_conversion_efficiency_value", "p10"): _arr(("flexible cell", "pce_is", "19.6 %")),
}

# Hand-derived expectations for the graph stage.

EXPECTED_STATS = {
    "entity_count": 23,
    "relation_count": 31,
    "citation_count": 10,
    "per_ontology": {"fabrication": 11, "parameters": 6, "performance": 6},
}

EXPECTED_ENTITIES = [
    "80% rh for 30 days",
    "92% after 500h am1.5g",
    "atomic layer deposition",
    "chemical bath deposition",
    "cuo",
    "dimethylformamide",
    "encapsulated module",
    "flexible cell",
    "hole transport layer",
    "inverted device",
    "pedot:pss",
    "perovskite film",
    "perovskite precursor",
    "potassium iodide",
    "retains 95% pce after 1000h at 85°c",
    "sno2",
    "spin coating",
    "sputtering",
    "stable to 85°c for 500h",
    "survives 85% rh, 7 days",
    "tandem cell",
    "thermal evaporation",
    "thermally evaporated copper oxide contacts for perovskite devices",
]

# (subject, label, object display, provenance)
EXPECTED_TRIPLES = {
    ("cuo", "boosts_power_conversion_efficiency", "23.4 %", ("p02",)),
    ("cuo", "fabricated_by", "spin coating", ("p02",)),
    ("cuo", "fabricated_by", "thermal evaporation", ("p03",)),
    ("cuo", "improves_moisture_stability", "80% rh for 30 days", ("p09",)),
    ("cuo", "improves_thermal_stability", "retains 95% pce after 1000h at 85°c", ("p06",)),
    ("encapsulated module", "has_device_structure", "glass/ITO/SnO2/perovskite/spiro-OMeTAD/Au", ("p06",)),
    ("encapsulated module", "has_light_stability", "92% after 500h am1.5g", ("p07",)),
    ("encapsulated module", "has_moisture_stability", "survives 85% rh, 7 days", ("p06",)),
    ("encapsulated module", "has_thermal_stability", "stable to 85°c for 500h", ("p07",)),
    ("flexible cell", "has_open_circuit_voltage", "1.12 V", ("p10",)),
    ("flexible cell", "has_power_conversion_efficiency", "19.6 %", ("p10",)),
    ("hole transport layer", "doped_with", "cuo", ("p08",)),
    ("inverted device", "has_device_structure", "ITO/PEDOT:PSS/perovskite/PCBM/Ag", ("p01",)),
    ("inverted device", "has_fill_factor", "0.82", ("p01",)),
    ("inverted device", "has_open_circuit_voltage", "1.08 V", ("p01",)),
    ("inverted device", "has_power_conversion_efficiency", "21.2 %", ("p01",)),
    ("inverted device", "uses_hole_transport_layer", "pedot:pss", ("p01", "p03")),
    ("perovskite film", "annealed_at", "100°C, 30min", ("p01",)),
    ("perovskite film", "spin_coated_at", "4000 rpm, 30s", ("p01",)),
    ("perovskite film", "spin_coated_at", "5000 rpm, 100µl", ("p03",)),
    ("perovskite precursor", "doped_with", "potassium iodide", ("p05",)),
    ("perovskite precursor", "uses_solvent", "dimethylformamide", ("p02", "p05")),
    ("sno2", "fabricated_by", "atomic layer deposition", ("p04",)),
    ("sno2", "fabricated_by", "chemical bath deposition", ("p05",)),
    ("sno2", "fabricated_by", "sputtering", ("p01",)),
    ("tandem cell", "has_device_structure", "ITO/SAM/perovskite/C60/BCP/Cu", ("p04",)),
    ("tandem cell", "has_fill_factor", "0.88", ("p04",)),
    ("tandem cell", "has_open_circuit_voltage", "1.2 V", ("p04",)),
    ("tandem cell", "has_power_conversion_efficiency", "28.1 %", ("p04",)),
    ("tandem cell", "has_short_circuit_current", "25 mA/cm2", ("p04",)),
    ("thermally evaporated copper oxide contacts for perovskite devices", "annealed_at", "120°C, 10min", ("p03",)),
}

# ------------------------------------------------------------- datagen

DATAGEN_ANSWERS = {
    ("p01", "Q1"): "Inverted cells pair an ITO front electrode with a PEDOT:PSS hole transport layer, a perovskite absorber, PCBM, and a silver back contact.",
    ("p01", "Q3"): "The perovskite layer is spin coated at 4000 rpm and annealed at 100 C for 30 minutes before the PCBM and silver layers are added.",
    ("p01", "Q6"): "Rinsing the PEDOT:PSS surface raises the open-circuit voltage from 1.02 V to 1.08 V.",
    ("p01", "Q18"): "PEDOT:PSS is the hole transport layer; HTL materials share deep HOMO levels that support high photovoltage.",
    ("p02", "Q2"): "The precursor is dissolved in Dimethylformamide (DMF) and stirred overnight before coating.",
    ("p02", "Q3"): "Cells are completed by spin coating a CuO interlayer from a nanoparticle ink to reach 23.4 % efficiency.",
    ("p02", "Q19"): "SnO2 serves as the electron transport layer; ETL materials with high mobility reduce series resistance.",
    ("p03", "Q6"): "Thermally evaporated CuO contacts passivate interface traps and raise the open-circuit voltage.",
    ("p03", "Q13"): "Evaporated CuO contacts passivate interface traps, halving the trap density.",
    ("p04", "Q1"): "Tandem devices use the stack ITO/SAM/perovskite/C60/BCP/Cu with atomic-layer-deposited SnO2 and reach 28.1 % efficiency.",
    ("p04", "Q7"): "Conformal atomic layer deposition of SnO2 keeps the tandem fill factor at 0.88.",
    ("p05", "Q2"): "The precursor uses DMF as the solvent with 1 mol% potassium iodide added to suppress hysteresis.",
    ("p05", "Q21"): "Potassium iodide passivates halide vacancies; such passivation materials trap mobile ions.",
    ("p06", "Q10"): "Hydrophobic CuO barrier layers let encapsulated modules survive 85% RH for 7 days.",
    ("p06", "Q11"): "CuO barrier layers keep modules at 95% of initial PCE after 1000 hours at 85°C.",
    ("p07", "Q11"): "UV-filtering encapsulants keep modules stable to 85°C for 500 hours.",
    ("p07", "Q12"): "Modules keep 92% of performance after 500 hours of AM1.5G light soaking.",
    ("p08", "Q13"): "Doping the hole transport layer with CuO passivates deep traps at the interface.",
    ("p08", "Q21"): "CuO acts as a Lewis-acid passivation additive in hole transport layers.",
    ("p09", "Q4"): "The work solves moisture-driven decomposition at grain boundaries of perovskite films.",
    ("p09", "Q10"): "CuO shells keep films stable at 80% relative humidity for 30 days.",
    ("p10", "Q6"): "Interface dipole engineering keeps the open-circuit voltage of flexible cells at 1.12 V.",
    ("p10", "Q8"): "Antireflection foils improve the short-circuit current of flexible cells.",
}

# (doc, question) -> (fixed_content, reason); everything else passes through.
VALIDATION_FIXES = {
    ("p01", "Q3"): (
        "The perovskite layer is spin coated at 4000 rpm and annealed at 100°C for 30 minutes before the PCBM and silver layers are added.",
        "corrected the temperature notation to match the section",
    ),
}
VALIDATION_FAILURES = {("p03", "Q13")}

ORGANIZED_TEXTS = {
    "Q1": "Reported structures pair ITO front electrodes with either PEDOT:PSS-based inverted stacks finished with PCBM and silver, or tandem stacks of ITO/SAM/perovskite/C60/BCP/Cu with atomic-layer-deposited SnO2 reaching 28.1 % efficiency.",
    "Q2": "Precursor solutions are prepared in DMF and stirred overnight; adding 1 mol% potassium iodide suppresses hysteresis.",
    "Q3": "Fabrication combines spin coating of the perovskite layer at 4000 rpm with annealing near 100°C, followed by interlayers such as spin-coated CuO that push efficiency to 23.4 %.",
    "Q4": "These works address moisture-driven decomposition at grain boundaries.",
    "Q6": "The open-circuit voltage improves through surface rinsing of PEDOT:PSS, thermally evaporated CuO contacts that passivate traps, and interface dipole engineering on flexible substrates.",
    "Q7": "Fill factor stays high with conformal atomic-layer-deposited SnO2 contacts.",
    "Q8": "Short-circuit current improves with antireflection foils.",
    "Q10": "Moisture stability improves with hydrophobic CuO barrier layers and CuO shells that keep films stable at high humidity.",
    "Q11": "Thermal stability improves with CuO barrier layers and UV-filtering encapsulants.",
    "Q12": "Light stability reaches 92% retention after 500 hours of AM1.5G soaking.",
    "Q13": "Defects are passivated by doping hole transport layers with CuO.",
    "Q18": "PEDOT:PSS is the common HTL; such materials share deep HOMO levels.",
    "Q19": "SnO2 is the common ETL; high-mobility ETLs reduce series resistance.",
    "Q21": "Potassium iodide and CuO act as passivation materials, trapping mobile ions and deep traps.",
}

EXPECTED_RECORD_ORDER = ["Q1", "Q2", "Q3", "Q4", "Q6", "Q7", "Q8",
                         "Q10", "Q11", "Q12", "Q13", "Q18", "Q19", "Q21"]

EXPECTED_SOURCES = {
    "Q1": ("p01", "p04"), "Q2": ("p02", "p05"), "Q3": ("p01", "p02"),
    "Q4": ("p09",), "Q6": ("p01", "p03", "p10"), "Q7": ("p04",),
    "Q8": ("p10",), "Q10": ("p06", "p09"), "Q11": ("p06", "p07"),
    "Q12": ("p07",), "Q13": ("p08",), "Q18": ("p01",), "Q19": ("p02",),
    "Q21": ("p05", "p08"),
}

EXPECTED_PERCENTAGES = {
    "Device Structure and Fabrication": 21.43,
    "Performance Enhancement Strategies": 7.14,
    "Performance Metrics Improvement": 21.43,
    "Stability Improvements": 21.43,
    "Defect and Recombination Management": 7.14,
    "Interface and Extraction Layer Enhancements": 0.0,
    "Materials Used in Perovskite Solar Cells": 21.43,
}

# ------------------------------------------------------------------ rag

CUO_QUERY = "How is CuO used in the reported devices?"

CUO_ANSWER = """CuO is used in several ways in the reported devices:
- Spin-coated CuO interlayers boost the power conversion efficiency to 23.4 % [1].
- It dopes hole transport layers to raise their conductivity [2].
- Thermally evaporated CuO forms rear contacts [3].
- CuO-modified films stay stable at 80% relative humidity for 30 days [4].
- CuO barrier layers retain 95% of the initial efficiency after 1000 hours at 85°C [5]."""

EXPECTED_CUO_CONTEXT = [
    "- cuo boosts_power_conversion_efficiency 23.4 % [1]",
    "- hole transport layer doped_with cuo [2]",
    "- cuo fabricated_by spin coating [1]",
    "- cuo fabricated_by thermal evaporation [3]",
    "- cuo improves_moisture_stability 80% rh for 30 days [4]",
    "- cuo improves_thermal_stability retains 95% pce after 1000h at 85°c [5]",
    "- thermally evaporated copper oxide contacts for perovskite devices annealed_at 120°C, 10min [3]",
]

EXPECTED_CUO_BIBLIOGRAPHY = [(1, "p02"), (2, "p08"), (3, "p03"), (4, "p09"), (5, "p06")]

QUERIES = [
    CUO_QUERY,
    "PEDOT:PSS hole transport layer",
    "tin oxide electron transport",
    "spin coating parameters",
    "annealed perovskite film",
    "tandem cell structure",
    "open-circuit voltage of flexible cell",
    "fill factor tandem",
    "short-circuit current",
    "power conversion efficiency 23.4",
    "potassium iodide additive",
    "dimethylformamide solvent",
    "encapsulated module stability",
    "moisture stability 80% RH",
    "thermal stability 85°C",
    "light stability AM1.5G",
    "device structure ITO",
    "sputtering deposition",
    "atomic layer deposition",
    "chemical bath deposition",
    "hole transport layer doped",
    "thermally evaporated contacts",
    "perovskite precursor solution",
    "spiro-OMeTAD gold stack",
    "copper oxide barrier layers",
]

# ---------------------------------------------------------------- judge

def _judge_reply(acc, comp, rel, clar, overall, float_texture=False) -> str:
    def block(score, note):
        return {"score": float(score) if float_texture else score, "explanation": note}
    return json.dumps({
        "accuracy": block(acc, "factual statements match the reference"),
        "completeness": block(comp, "covers the main points"),
        "relevance": block(rel, "stays on the question"),
        "clarity": block(clar, "reads clearly"),
        "overall": {"score": overall, "summary": "weighed across the four criteria"},
    }, ensure_ascii=False, indent=2)


JUDGE_GOOD = [
    (f"judge-pair-{i:02d}: model answer text", f"judge-pair-{i:02d}: reference answer text", scores)
    for i, scores in enumerate([
        (1, 2, 1, 2, 1),
        (5, 5, 5, 5, 5),
        (3, 3, 3, 3, 3),
        (4, 3, 4, 4, 4),
        (2, 4, 3, 5, 3),
        (5, 4, 4, 4, 4),
        (1, 1, 2, 1, 1),
        (4, 4, 4, 5, 4),
        (3, 2, 4, 3, 3),
        (5, 3, 2, 4, 3),
    ], start=1)
]

JUDGE_BAD = [
    ("judge-bad-01: model answer text", "judge-bad-01: reference answer text",
     "Looks good overall, no JSON needed."),
    ("judge-bad-02: model answer text", "judge-bad-02: reference answer text",
     _judge_reply(7, 4, 4, 4, 4)),
    ("judge-bad-03: model answer text", "judge-bad-03: reference answer text",
     json.dumps({
         "accuracy": {"score": 4, "explanation": "ok"},
         "completeness": {"score": 4, "explanation": "ok"},
         "relevance": {"score": 4, "explanation": "ok"},
         "overall": {"score": 4, "summary": "ok"},
     })),
    ("judge-bad-04: model answer text", "judge-bad-04: reference answer text",
     json.dumps({
         "accuracy": {"score": "five", "explanation": "ok"},
         "completeness": {"score": 4, "explanation": "ok"},
         "relevance": {"score": 4, "explanation": "ok"},
         "clarity": {"score": 4, "explanation": "ok"},
         "overall": {"score": 4, "summary": "ok"},
     })),
    ("judge-bad-05: model answer text", "judge-bad-05: reference answer text",
     json.dumps({
         "accuracy": {"score": 4, "explanation": "ok"},
         "completeness": {"score": 4, "explanation": "ok"},
         "relevance": {"score": 4, "explanation": "ok"},
         "clarity": {"score": 4, "explanation": "ok"},
         "overall": {"summary": "fine but unscored"},
     })),
]

QA_PAIRS = [
    ("qa1", "Films are spin coated at 4000 rpm for uniformity.",
     "Spin coating at 4000 rpm gives uniform films.", (5, 4, 5, 4, 5)),
    ("qa2", "Efficiency rises to 23.4 % with CuO interlayers.",
     "CuO interlayers boost efficiency to 23.4 %.", (4, 4, 5, 4, 4)),
    ("qa3", "Modules with encapsulation survive damp heat.",
     "Encapsulated modules survive damp heat testing.", (3, 3, 4, 4, 3)),
    ("qa4", "The precursor dissolves in DMF.",
     "DMF dissolves the perovskite precursor.", (5, 5, 5, 5, 5)),
    ("qa5", "A tandem design reaches 28.1 % efficiency.",
     "Tandem cells reach 28.1 % efficiency.", (4, 3, 4, 5, 4)),
]

# ------------------------------------------------------------------ mcq

MCQ_KEYS = ["B", "C", "A", "D", "B", "A", "C", "B", "D", "A",
            "C", "B", "A", "D", "C", "B", "A", "D", "C", "B"]

MCQ_STEMS = [
    "Which layer transports holes in an inverted cell?",
    "Which solvent dissolves the perovskite precursor?",
    "Which deposition grows conformal SnO2 for tandems?",
    "Which additive suppresses hysteresis?",
    "Which electrode caps the inverted stack?",
    "Which treatment raises the open-circuit voltage?",
    "Which layer blocks moisture in encapsulated modules?",
    "Which method deposits CuO interlayers?",
    "Which metric improves with antireflection foils?",
    "Which material is sputtered as a window electrode?",
    "Which dopant raises HTL conductivity?",
    "Which test follows IEC 61215?",
    "Which contact is thermally evaporated?",
    "Which stack reaches 28.1 % efficiency?",
    "Which condition anneals the perovskite film?",
    "Which mechanism passivates halide vacancies?",
    "Which substrate suits flexible cells?",
    "Which measurement tracks humidity damage?",
    "Which illumination standard is used for light soaking?",
    "Which loss shrinks after PEDOT:PSS rinsing?",
]

MCQ_OPTIONS = [
    ["SnO2", "PEDOT:PSS", "PCBM", "Ag"],
    ["Water", "Ethanol", "DMF", "Toluene"],
    ["Atomic layer deposition", "Sputtering", "Spin coating", "Evaporation"],
    ["Sodium chloride", "Lead iodide", "Cesium bromide", "Potassium iodide"],
    ["ITO", "Silver", "Gold", "Copper"],
    ["Surface rinsing", "Thicker absorber", "Slower cooling", "Higher bias"],
    ["PCBM", "Perovskite", "CuO barrier", "ITO"],
    ["Thermal evaporation", "Spin coating", "Sputtering", "Lamination"],
    ["Fill factor", "Open-circuit voltage", "Stability", "Short-circuit current"],
    ["SnO2", "CuO", "Spiro-OMeTAD", "BCP"],
    ["Lithium salt", "Cobalt complex", "CuO", "Iodine"],
    ["Light soaking", "Thermal cycling", "Bias stress", "Damp heat"],
    ["CuO", "PEDOT:PSS", "SnO2", "PCBM"],
    ["Single junction", "Bifacial", "Flexible", "Tandem"],
    ["As deposited", "50°C vacuum", "100°C hotplate", "200°C furnace"],
    ["Grain growth", "Potassium passivation", "Solvent annealing", "Light soaking"],
    ["PET", "Glass", "Silicon", "Steel"],
    ["Ellipsometry", "Raman", "Photoluminescence", "X-ray diffraction"],
    ["AM0", "UV-A", "AM1.5G", "Infrared"],
    ["Current loss", "Voltage loss", "Thermal loss", "Optical loss"],
]

MCQ_BASELINE = {
    "m01": "B",
    "m02": "C.",
    "m03": "The answer is A.",
    "m04": "(D)",
    "m05": "I would choose (B) here.",
    "m06": "Answer is: A",
    "m07": "C)",
    "m08": "The answer is (B).",
    "m09": "D",
    "m10": "My answer is A",
    "m11": " C ",
    "m12": "(B) because the barrier blocks moisture.",
    "m13": "Answer is (A)",
    "m14": "B",
    "m15": "The answer is D.",
    "m16": "(C)",
    "m17": "b",
    "m18": "Both options look plausible.",
    # m19 deliberately absent: a missing baseline response grades incorrect.
    "m20": "A",
}

MCQ_PREDICTIONS = {
    "m01": "The answer is B",
    "m02": "C",
    "m03": "(A)",
    "m04": "D.",
    "m05": "B)",
    "m06": "After weighing the options, the answer is A.",
    "m07": "(C) fits the data best.",
    "m08": "answer is: B",
    "m09": "I pick (D).",
    "m10": "A",
    "m11": "B",
    "m12": "The answer is D.",
    "m13": "Impossible to say.",
    "m14": "The answer is (D).",
    "m15": "C",
    "m16": "Answer is B.",
    "m17": "(B) seems right.",
    "m18": "A",
    "m19": "the letter c",
    # m20 deliberately absent: a missing prediction grades incorrect.
}

# Hand counts for the tables above.
EXPECTED_EASY = {f"m{i:02d}" for i in range(1, 14)}
EXPECTED_HARD = {f"m{i:02d}" for i in range(14, 21)}
EXPECTED_PREDICTION_CORRECT = 13  # m01..m10 plus m14, m15, m16


def _jsonl(path: Path, records) -> None:
    with path.open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def build_backend(corpus, catalog):
    doc_by_text = {full_text(doc): doc.doc_id for doc in corpus.docs.values()}
    answer_to_pair = {text: pair for pair, text in DATAGEN_ANSWERS.items()}
    # Dispatch keys must be collision-free or replies would cross wires.
    assert len(doc_by_text) == len(corpus.docs)
    assert len(answer_to_pair) == len(DATAGEN_ANSWERS)
    question_to_id = {q.text: q.id for q in catalog.questions}
    judge_by_response = {}
    for model, _, scores in JUDGE_GOOD:
        judge_by_response[model] = _judge_reply(*scores, float_texture=(model.startswith("judge-pair-04")))
    for model, _, reply in JUDGE_BAD:
        judge_by_response[model] = reply
    for _, prediction, _, scores in QA_PAIRS:
        judge_by_response[prediction] = _judge_reply(*scores)

    def backend(prompt: str, request) -> str:
        b = request.bindings
        t = request.template_id
        if t == "filter":
            so_id = SUBONTOLOGY_NAME_TO_ID[b["subontology_name"]]
            doc_id = doc_by_text[b["paper_text"]]
            relevant = doc_id in FILTER_TABLE[so_id]
            payload = json.dumps({
                "relevant": "yes" if relevant else "no",
                "reason": f"the text {'discusses' if relevant else 'does not discuss'} {b['subontology_name'].lower()}",
            })
            return _fenced(payload) if (so_id, doc_id) == ("method", "p02") else payload
        if t == "kg_extraction":
            so_id = SUBONTOLOGY_NAME_TO_ID[b["subontology_name"]]
            doc_id = doc_by_text[b["paper_text"]]
            return EXTRACTION_REPLIES[(so_id, doc_id)]
        if t == "answer_extraction":
            doc_id = doc_by_text[b["paper_text"]]
            entries = [
                {"question": f"{q.id}: {q.text}",
                 "answer": DATAGEN_ANSWERS.get((doc_id, q.id), "Not mentioned")}
                for q in catalog.questions
            ]
            return json.dumps({"questions": entries}, ensure_ascii=False, indent=2)
        if t == "verification":
            answer_text = b["Extracted_information"]
            doc_id, question_id = answer_to_pair[answer_text]
            if (doc_id, question_id) in VALIDATION_FAILURES:
                return "I could not verify this claim against the section."
            fixed, reason = VALIDATION_FIXES.get(
                (doc_id, question_id), (answer_text, "supported by the section text")
            )
            return json.dumps(
                {"verified_info": {"fixed_content": fixed, "reason": reason}},
                ensure_ascii=False,
            )
        if t == "organization":
            question_id = question_to_id[b["question"]]
            return json.dumps({"answer": ORGANIZED_TEXTS[question_id]}, ensure_ascii=False)
        if t == "judge":
            return judge_by_response[b["model_response"]]
        if t == "rag_answer":
            if b["question"] == CUO_QUERY:
                return CUO_ANSWER
            first_line = b["context"].splitlines()[0]
            return f"According to the knowledge graph, {first_line[2:]}."
        raise AssertionError(f"unexpected template {t!r}")

    return backend


def main() -> None:
    DATA.mkdir(parents=True, exist_ok=True)
    if GOLDEN.exists():
        shutil.rmtree(GOLDEN)
    GOLDEN.mkdir()

    corpus_path = DATA / "corpus.jsonl"
    _jsonl(corpus_path, DOCS)
    corpus = ingest(corpus_path).corpus
    assert len(corpus) == 10

    schema = load_schema()
    catalog = datagen.load_catalog()

    replay_path = DATA / "replay.jsonl"
    if replay_path.exists():
        replay_path.unlink()
    store = FixtureStore.open(replay_path, create=True)
    gateway = LlmGateway(fixtures=store, backend=build_backend(corpus, catalog), record=True)

    # Stage 1: routing. 13 sub-ontologies x 10 documents, no unresolved pairs.
    filtered = kg_pipeline.filter_documents(corpus, schema, gateway)
    assert not filtered.unresolved
    assert len(filtered.verdicts) == 130
    expected_assignments = {so: tuple(sorted(ids)) for so, ids in FILTER_TABLE.items()}
    assert filtered.assignments == expected_assignments, filtered.assignments
    (GOLDEN / "filtered.json").write_text(
        json.dumps({k: list(v) for k, v in filtered.assignments.items()},
                   indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )

    # Stage 2: extraction. One completion per routed pair; two quarantines.
    extraction = kg_pipeline.extract_knowledge(corpus, schema, filtered.assignments, gateway)
    assert extraction.completion_count == 33
    assert not extraction.unresolved
    assert len(extraction.candidates) == 33
    quarantine_keys = {(q.doc_id, q.subontology_id, q.reason.split(":")[0])
                       for q in extraction.quarantined}
    assert quarantine_keys == {
        ("p07", "annealing_parameter", "unparseable-completion"),
        ("p04", "fill_factor_value", "type-validation-failure"),
    }, quarantine_keys

    # Stage 3: graph. Counts, entity ids, and every triple checked by hand.
    resolution = kg_pipeline.disambiguate_entities(extraction.candidates)
    triples = kg_pipeline.dedupe_relations(extraction.candidates, resolution)
    graph = kg_store.build(triples, resolution, corpus)
    kg_store.validate_graph(graph)

    stats = kg_store.stats(graph)
    assert stats == EXPECTED_STATS, stats
    assert sorted(graph.entities) == EXPECTED_ENTITIES, sorted(graph.entities)
    got_triples = {
        (r.subject, r.label, r.object_display(), r.provenance) for r in graph.relations
    }
    assert got_triples == EXPECTED_TRIPLES, got_triples ^ EXPECTED_TRIPLES
    externals = [(e.from_doc, e.to_doc) for e in graph.citation_edges if e.external]
    assert externals == [("p05", "doi:10.1000/ext.2019")]
    (GOLDEN / "graph_stats.json").write_text(
        json.dumps(stats, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )

    # Stage 4: instruction data. 23 substantive answers, one validation
    # failure, 14 assembled records.
    result = datagen.generate_dataset(corpus, gateway, catalog=catalog)
    assert not result.quarantined
    assert not result.deferred
    assert result.extracted_count == 23
    assert result.validated_count == 22
    assert [r.question_id for r in result.records] == EXPECTED_RECORD_ORDER
    for record in result.records:
        assert record.source_doc_ids == EXPECTED_SOURCES[record.question_id]
        assert record.response == ORGANIZED_TEXTS[record.question_id]
        assert record.prompt == catalog.question(record.question_id).text
    report = datagen.category_report(result.records, catalog)
    assert report["total"] == 14
    assert report["percentages"] == EXPECTED_PERCENTAGES, report["percentages"]
    assert abs(sum(report["percentages"].values()) - 100.0) <= 0.1
    datagen.write_dataset(result.records, GOLDEN / "dataset.jsonl")
    (GOLDEN / "category_report.json").write_text(
        json.dumps(report, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )

    # Stage 5: retrieval-augmented answers over the saved graph.
    idx = rag.index(graph)
    cuo = rag.answer_with_citations(idx, CUO_QUERY, gateway)
    assert list(cuo.context.lines) == EXPECTED_CUO_CONTEXT, cuo.context.lines
    got_bib = [(e.number, e.doc_id) for e in cuo.context.bibliography]
    assert got_bib == EXPECTED_CUO_BIBLIOGRAPHY, got_bib
    assert cuo.flags == ()
    (GOLDEN / "cuo_context.txt").write_text(cuo.context.context_text + "\n", encoding="utf-8")
    (GOLDEN / "cuo_transcript.json").write_text(
        json.dumps(rag.transcript_dict(cuo), indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    for query in QUERIES:
        answer = rag.answer_with_citations(idx, query, gateway)
        assert answer.context.bibliography, query
        assert "ungrounded" not in answer.flags, query
        assert "citation-leak" not in answer.flags, query
    (DATA / "queries.json").write_text(
        json.dumps(QUERIES, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )

    # Stage 6: judge fixtures, both unit pairs and the QA eval pairs.
    good_pairs = [(m, g) for m, g, _ in JUDGE_GOOD]
    bad_pairs = [(m, g) for m, g, _ in JUDGE_BAD]
    scores, failures = evaluate.judge_many(good_pairs + bad_pairs, gateway)
    assert len(scores) == 10 and len(failures) == 5, (len(scores), len(failures))
    for (_, _, expected), score in zip(JUDGE_GOOD, scores):
        got = (score.accuracy.score, score.completeness.score, score.relevance.score,
               score.clarity.score, score.overall.score)
        assert got == expected, (got, expected)
    _jsonl(DATA / "judge_pairs.jsonl", [
        {"model_response": m, "ground_truth": g, "expect": "ok", "overall": s[4]}
        for m, g, s in JUDGE_GOOD
    ] + [
        {"model_response": m, "ground_truth": g, "expect": "fail"}
        for m, g, _ in JUDGE_BAD
    ])
    for _, prediction, reference, scores_tuple in QA_PAIRS:
        score = evaluate.judge_qa(prediction, reference, gateway)
        assert score.overall.score == scores_tuple[4]
    _jsonl(DATA / "qa_predictions.jsonl",
           [{"item_id": i, "text": p} for i, p, _, _ in QA_PAIRS])
    _jsonl(DATA / "qa_references.jsonl",
           [{"item_id": i, "text": r} for i, _, r, _ in QA_PAIRS])

    # Stage 7: MCQ fixture files (no completions involved).
    _jsonl(DATA / "mcq_items.jsonl", [
        {"item_id": f"m{i:02d}", "stem": stem, "options": options, "answer_key": key}
        for i, (stem, options, key) in enumerate(zip(MCQ_STEMS, MCQ_OPTIONS, MCQ_KEYS), start=1)
    ])
    _jsonl(DATA / "mcq_baseline.jsonl",
           [{"item_id": k, "text": v} for k, v in MCQ_BASELINE.items()])
    _jsonl(DATA / "mcq_predictions.jsonl",
           [{"item_id": k, "text": v} for k, v in MCQ_PREDICTIONS.items()])

    items = datagen.load_mcq_items(DATA / "mcq_items.jsonl")
    baseline_results = evaluate.grade_mcq(items, MCQ_BASELINE)
    easy, hard = evaluate.partition_easy_hard(items, baseline_results)
    assert easy == frozenset(EXPECTED_EASY), sorted(easy)
    assert hard == frozenset(EXPECTED_HARD), sorted(hard)
    prediction_results = evaluate.grade_mcq(items, MCQ_PREDICTIONS)
    correct = sum(1 for r in prediction_results if r.correct)
    assert correct == EXPECTED_PREDICTION_CORRECT, correct

    # Stage 8: frozen prompt renders with pinned bindings.
    p01 = corpus.docs["p01"]
    render_bindings = {
        "answer_extraction": {
            "question_catalog": catalog.prompt_listing_json(),
            "paper_text": full_text(p01),
        },
        "verification": {
            "Section_name": "Methods",
            "Text_of_the_section": p01.sections[1].text,
            "Extracted_information": DATAGEN_ANSWERS[("p01", "Q3")],
        },
        "organization": {
            "question": catalog.question("Q6").text,
            "answers": "\n\n".join(
                DATAGEN_ANSWERS[(d, "Q6")] for d in ("p01", "p03", "p10")
            ),
        },
        "judge": {
            "model_response": QA_PAIRS[1][1],
            "ground_truth": QA_PAIRS[1][2],
        },
    }
    for template_id, bindings in render_bindings.items():
        rendered = gateway.render(template_id, bindings)
        (GOLDEN / f"render_{template_id}.txt").write_text(rendered, encoding="utf-8")
    (GOLDEN / "render_bindings.json").write_text(
        json.dumps(render_bindings, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )

    # Replay sanity: a fresh gateway with no backend must cover the whole run.
    replay_store = FixtureStore.open(replay_path)
    replay_gateway = LlmGateway(fixtures=replay_store)
    refilter = kg_pipeline.filter_documents(corpus, schema, replay_gateway)
    assert refilter.assignments == expected_assignments
    recuo = rag.answer_with_citations(rag.index(graph), CUO_QUERY, replay_gateway)
    assert recuo.answer_text == cuo.answer_text

    print(f"fixtures: {len(store)} completions recorded -> {replay_path}")
    print(f"goldens: {sorted(p.name for p in GOLDEN.iterdir())}")


if __name__ == "__main__":
    main()
