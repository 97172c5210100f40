#!/usr/bin/env python3
"""Regenerates the bundled sample data under data/.

Writes sample_cases.jsonl, taxonomy.json, synonyms.json and
probe_pairs.json. personas.json and noise_lexicon.json come from
`dxenv_dump_defaults` so they always match the built-in tables.

    python3 tools/make_sample_data.py [--dump build/tools/dxenv_dump_defaults]
"""

import argparse
import json
import random
import subprocess
from pathlib import Path

DATA = Path(__file__).resolve().parent.parent / "data"

# name: (description, parameters, financial, discomfort, category)
TAXONOMY = {
    "complete_blood_count": ("Complete blood count with differential", {}, 1, 1, "laboratory"),
    "basic_metabolic_panel": ("Electrolytes, glucose, urea and creatinine", {}, 1, 1, "laboratory"),
    "liver_function_panel": ("Liver enzymes, bilirubin and albumin", {}, 1, 1, "laboratory"),
    "lipase": ("Serum lipase", {}, 1, 1, "laboratory"),
    "troponin": ("High-sensitivity cardiac troponin", {}, 1, 1, "laboratory"),
    "d_dimer": ("Plasma D-dimer", {}, 1, 1, "laboratory"),
    "thyroid_panel": ("TSH and free T4", {}, 1, 1, "laboratory"),
    "hba1c": ("Glycated hemoglobin", {}, 1, 1, "laboratory"),
    "blood_culture": ("Two sets of blood cultures", {}, 1, 1, "laboratory"),
    "urinalysis": ("Urine dipstick and microscopy", {}, 1, 1, "laboratory"),
    "urine_culture": ("Urine culture with sensitivities", {}, 1, 1, "laboratory"),
    "stool_culture": ("Stool culture and ova/parasites", {}, 1, 1, "laboratory"),
    "rapid_influenza_test": (
        "Rapid influenza antigen test",
        {"specimen": {"type": "string", "description": "Sample site", "required": True}},
        1, 2, "laboratory"),
    "throat_culture": ("Throat swab culture", {}, 1, 2, "laboratory"),
    "arterial_blood_gas": ("Arterial blood gas", {}, 1, 3, "laboratory"),
    "electrocardiogram": ("12-lead ECG", {}, 1, 1, "cardiology"),
    "echocardiogram": ("Transthoracic echocardiogram", {}, 2, 1, "cardiology"),
    "chest_xray": (
        "Chest radiograph",
        {"view": {"type": "string", "description": "Projection(s)", "required": True}},
        1, 1, "imaging"),
    "ct_head": ("Non-contrast CT of the head", {}, 2, 1, "imaging"),
    "ct_abdomen_pelvis": (
        "CT of the abdomen and pelvis",
        {"contrast": {"type": "boolean", "description": "IV contrast", "required": True}},
        3, 2, "imaging"),
    "ct_pulmonary_angiogram": (
        "CT pulmonary angiogram",
        {"contrast": {"type": "boolean", "description": "IV contrast", "required": True}},
        3, 2, "imaging"),
    "abdominal_ultrasound": (
        "Abdominal ultrasound",
        {"region": {"type": "string", "description": "Target organ or quadrant", "required": False}},
        2, 1, "imaging"),
    "lower_extremity_doppler": (
        "Venous duplex ultrasound of the leg",
        {"side": {"type": "string", "description": "left or right", "required": True}},
        2, 1, "imaging"),
    "mri_brain": (
        "MRI of the brain",
        {"contrast": {"type": "boolean", "description": "Gadolinium", "required": False}},
        3, 2, "imaging"),
    "spirometry": ("Spirometry with bronchodilator response", {}, 2, 1, "pulmonary"),
    "peak_flow": ("Peak expiratory flow", {}, 1, 1, "pulmonary"),
    "lumbar_puncture": ("Lumbar puncture with CSF analysis", {}, 2, 3, "procedure"),
    "upper_endoscopy": (
        "Esophagogastroduodenoscopy",
        {"sedation": {"type": "string", "description": "Sedation level", "required": False}},
        3, 3, "procedure"),
    "colonoscopy": ("Colonoscopy", {}, 3, 3, "procedure"),
    "skin_biopsy": ("Punch biopsy of a skin lesion", {}, 2, 3, "procedure"),
}

# (case_id, source, demographics, history, symptoms, diagnosis, {exam: (args, findings)})
CASES = [
    ("ddx-001", "DDxPlus", "34-year-old female", "No chronic illness. Works as a schoolteacher.",
     ["fever and chills for 2 days", "dry cough", "aching muscles all over", "sore throat"],
     "Influenza",
     {"rapid_influenza_test": ({"specimen": "nasal swab"},
                               "Type A antigen detected on nasal swab; type B antigen not detected"),
      "complete_blood_count": ({}, "White cell count 4.1 x10^9/L; lymphocytes mildly decreased; hemoglobin normal")}),
    ("ddx-002", "DDxPlus", "67-year-old male", "Former smoker, 30 pack-years. Hypertension on amlodipine.",
     ["cough with yellow sputum for 5 days", "fever", "sharp pain in the right side of the chest when breathing deeply",
      "short of breath on stairs"],
     "Community-acquired pneumonia",
     {"chest_xray": ({"view": "PA and lateral"},
                     "Right lower lobe consolidation; no pleural effusion; heart size normal"),
      "complete_blood_count": ({}, "White cell count 15.2 x10^9/L; neutrophils elevated; hemoglobin normal")}),
    ("ddx-003", "DDxPlus", "45-year-old male", "Overweight. Drinks coffee several times a day.",
     ["burning feeling in my chest after meals", "sour taste in my mouth at night", "worse when lying down"],
     "Gastroesophageal reflux disease",
     {"upper_endoscopy": ({"sedation": "moderate"},
                          "Mild erythema of the distal esophagus; no ulceration; no columnar metaplasia"),
      "electrocardiogram": ({}, "Normal sinus rhythm at 72 bpm; no ST segment changes")}),
    ("ddx-004", "DDxPlus", "28-year-old female", "One similar episode last year.",
     ["burning when I pee", "needing to go to the bathroom all the time", "dull pain in the lower belly"],
     "Urinary tract infection",
     {"urinalysis": ({}, "Leukocyte esterase positive; nitrites positive; moderate bacteria"),
      "urine_culture": ({}, "Escherichia coli above 100,000 CFU/mL; sensitive to nitrofurantoin")}),
    ("pmc-001", "PMCPatients", "19-year-old male", "No prior surgery.",
     ["pain that started around my belly button and moved to the lower right side", "nausea",
      "low fever since yesterday"],
     "Acute appendicitis",
     {"ct_abdomen_pelvis": ({"contrast": True},
                            "Dilated appendix measuring 11 mm with periappendiceal fat stranding; no free air"),
      "complete_blood_count": ({}, "White cell count 13.8 x10^9/L; neutrophil predominance")}),
    ("pmc-002", "PMCPatients", "52-year-old female", "Returned from a 14-hour flight three days ago. On oral estrogen.",
     ["sudden shortness of breath this morning", "sharp chest pain when breathing in",
      "my left calf has been swollen since my flight"],
     "Pulmonary embolism",
     {"d_dimer": ({}, "D-dimer 2.4 mg/L FEU, elevated"),
      "ct_pulmonary_angiogram": ({"contrast": True},
                                 "Filling defects in the right lower lobe segmental arteries; no right heart strain"),
      "lower_extremity_doppler": ({"side": "left"},
                                  "Non-compressible left popliteal vein; thrombus extends into the calf veins")}),
    ("pmc-003", "PMCPatients", "41-year-old male", "Heavy alcohol use. No known gallstones.",
     ["severe pain in the upper belly that goes through to my back", "vomiting several times",
      "I drank a lot over the weekend"],
     "Acute pancreatitis",
     {"lipase": ({}, "Lipase 1450 U/L, markedly elevated"),
      "ct_abdomen_pelvis": ({"contrast": True},
                            "Peripancreatic fat stranding and edema; no necrosis; gallbladder unremarkable")}),
    ("pmc-004", "PMCPatients", "58-year-old female", "Radioactive iodine treatment 10 years ago.",
     ["tired all the time for months", "gained weight without eating more", "always feeling cold", "dry skin"],
     "Hypothyroidism",
     {"thyroid_panel": ({}, "TSH 14.2 mIU/L, elevated; free T4 0.6 ng/dL, low")}),
    ("ac-001", "AgentClinic", "26-year-old female", "Mother has similar headaches.",
     ["throbbing headache on one side of my head", "light bothers my eyes", "nausea with the headaches",
      "it has happened 3 times this month"],
     "Migraine",
     {"mri_brain": ({"contrast": False}, "No intracranial mass; no hemorrhage; normal ventricles")}),
    ("ac-002", "AgentClinic", "63-year-old male", "Right knee replacement two weeks ago.",
     ["my right leg is swollen and sore", "the calf feels warm", "it hurts more when I walk"],
     "Deep vein thrombosis",
     {"lower_extremity_doppler": ({"side": "right"},
                                  "Non-compressible right femoral vein; echogenic thrombus in the popliteal vein"),
      "d_dimer": ({}, "D-dimer 1.9 mg/L FEU, elevated")}),
]

SYNONYM_PAIRS = [
    ("myocardial infarction", "heart attack"),
    ("influenza", "flu"),
    ("cerebrovascular accident", "stroke"),
    ("hypertension", "high blood pressure"),
    ("gastroesophageal reflux disease", "GERD"),
    ("urinary tract infection", "UTI"),
    ("chronic obstructive pulmonary disease", "COPD"),
    ("pulmonary embolism", "PE"),
    ("deep vein thrombosis", "DVT"),
    ("type 2 diabetes mellitus", "T2DM"),
    ("varicella", "chickenpox"),
    ("rubeola", "measles"),
    ("pertussis", "whooping cough"),
    ("acute otitis media", "middle ear infection"),
    ("conjunctivitis", "pink eye"),
    ("cholelithiasis", "gallstones"),
    ("nephrolithiasis", "kidney stones"),
    ("viral gastroenteritis", "stomach bug"),
    ("herpes zoster", "shingles"),
    ("epistaxis", "nosebleed"),
    ("syncope", "fainting"),
    ("atrial fibrillation", "AFib"),
    ("congestive heart failure", "CHF"),
    ("acute kidney injury", "AKI"),
    ("tuberculosis", "TB"),
    ("infectious mononucleosis", "mono"),
    ("allergic rhinitis", "hay fever"),
    ("peptic ulcer disease", "stomach ulcer"),
    ("hypothyroidism", "underactive thyroid"),
    ("hyperthyroidism", "overactive thyroid"),
    ("sinusitis", "sinus infection"),
    ("pneumonia", "lung infection"),
    ("Bell's palsy", "idiopathic facial nerve palsy"),
]

DISTRACTOR_PAIRS = [
    ("asthma", "pneumonia"),
    ("acute appendicitis", "cholecystitis"),
    ("migraine", "tension-type headache"),
    ("iron deficiency anemia", "leukemia"),
    ("gout", "rheumatoid arthritis"),
    ("psoriasis", "atopic dermatitis"),
    ("bronchitis", "laryngitis"),
    ("pulmonary embolism", "pneumothorax"),
    ("myocardial infarction", "pericarditis"),
    ("hypothyroidism", "major depressive disorder"),
    ("urinary tract infection", "pyelonephritis"),
    ("cellulitis", "deep vein thrombosis"),
    ("sarcoidosis", "lymphoma"),
    ("multiple sclerosis", "myasthenia gravis"),
    ("Crohn's disease", "ulcerative colitis"),
    ("celiac disease", "irritable bowel syndrome"),
    ("influenza", "streptococcal pharyngitis"),
    ("acute pancreatitis", "peptic ulcer disease"),
    ("aortic stenosis", "hypertrophic cardiomyopathy"),
    ("Parkinson's disease", "essential tremor"),
    ("lupus", "dermatomyositis"),
    ("meningitis", "subarachnoid hemorrhage"),
    ("hepatitis A", "Gilbert syndrome"),
    ("endometriosis", "ovarian torsion"),
    ("benign prostatic hyperplasia", "prostatitis"),
    ("glaucoma", "cataract"),
    ("vertigo", "otosclerosis"),
    ("anorexia nervosa", "hyperthyroidism"),
    ("tuberculosis", "histoplasmosis"),
    ("atrial fibrillation", "sick sinus syndrome"),
    ("kidney stones", "diverticulitis"),
    ("scabies", "contact dermatitis"),
    ("Lyme disease", "fibromyalgia"),
]

MULTI_PARTIAL = [
    ("type 2 diabetes mellitus; hypertension", "type 2 diabetes mellitus"),
    ("community-acquired pneumonia; sepsis", "community-acquired pneumonia"),
    ("atrial fibrillation; congestive heart failure", "atrial fibrillation"),
    ("iron deficiency anemia; celiac disease", "celiac disease"),
    ("chronic kidney disease and hyperkalemia", "hyperkalemia"),
    ("asthma; allergic rhinitis", "asthma"),
    ("acute cholecystitis; choledocholithiasis", "acute cholecystitis"),
    ("major depressive disorder; generalized anxiety disorder", "generalized anxiety disorder"),
    ("rheumatoid arthritis; interstitial lung disease", "rheumatoid arthritis"),
    ("HIV infection; Pneumocystis pneumonia", "Pneumocystis pneumonia"),
    ("obesity; obstructive sleep apnea", "obstructive sleep apnea"),
    ("alcohol use disorder; alcoholic hepatitis", "alcoholic hepatitis"),
    ("myocardial infarction; cardiogenic shock", "heart attack"),
    ("influenza; bacterial sinusitis", "flu"),
    ("hypertension and left ventricular hypertrophy", "high blood pressure"),
    ("deep vein thrombosis; pulmonary embolism", "DVT"),
    ("urinary tract infection; urosepsis", "UTI"),
    ("COPD; cor pulmonale", "chronic obstructive pulmonary disease"),
    ("gout; chronic kidney disease", "gout"),
    ("hypothyroidism; hyperlipidemia", "hypothyroidism"),
    ("Graves disease; atrial flutter", "Graves disease"),
    ("systemic lupus erythematosus; lupus nephritis", "lupus nephritis"),
    ("cirrhosis; hepatic encephalopathy", "cirrhosis"),
    ("ulcerative colitis; primary sclerosing cholangitis", "ulcerative colitis"),
    ("sickle cell disease; acute chest syndrome", "acute chest syndrome"),
    ("migraine; medication overuse headache", "migraine"),
    ("tuberculosis; HIV infection", "tuberculosis"),
    ("endocarditis; septic emboli", "endocarditis"),
    ("nephrotic syndrome; renal vein thrombosis", "nephrotic syndrome"),
    ("Cushing syndrome; osteoporosis", "Cushing syndrome"),
    ("polycystic ovary syndrome; insulin resistance", "polycystic ovary syndrome"),
    ("multiple myeloma and hypercalcemia", "multiple myeloma"),
    ("cerebrovascular accident; aspiration pneumonia", "stroke"),
]


def tool_schema(name):
    desc, params, fin, disc, _ = TAXONOMY[name]
    return {"name": name, "description": desc, "parameters": params,
            "cost_financial": fin, "cost_discomfort": disc}


def build_cases():
    out = []
    names = sorted(TAXONOMY)
    for case_id, source, demo, history, symptoms, dx, exams in CASES:
        gt = dx.lower()
        for text in symptoms + [f for _, f in exams.values()]:
            assert gt not in text.lower(), (case_id, text)
        rng = random.Random(case_id)
        distractors = rng.sample([n for n in names if n not in exams], 5)
        tools = [tool_schema(n) for n in sorted(exams)] + [tool_schema(n) for n in distractors]
        rng.shuffle(tools)
        exam_map = {
            name: {"canonical_findings": findings, "clauses": findings.split("; "), "arguments": args}
            for name, (args, findings) in sorted(exams.items())
        }
        out.append({"case_id": case_id, "source": source, "demographics": demo, "medical_history": history,
                    "self_reported_symptoms": symptoms, "ground_truth_dx": dx, "exam_map": exam_map,
                    "available_tools": tools})
    return out


def build_probes():
    pairs = []
    for gt, pred in SYNONYM_PAIRS:
        pairs.append({"bucket": "Synonym", "ground_truth": gt, "prediction": pred,
                      "expected": {"gt_count": 1, "pred_count": 1, "matched": 1}})
    for gt, pred in DISTRACTOR_PAIRS:
        pairs.append({"bucket": "Distractor", "ground_truth": gt, "prediction": pred,
                      "expected": {"gt_count": 1, "pred_count": 1, "matched": 0}})
    for gt, pred in MULTI_PARTIAL:
        pairs.append({"bucket": "MultiPartial", "ground_truth": gt, "prediction": pred,
                      "expected": {"gt_count": 2, "pred_count": 1, "matched": 1}})
    assert len(pairs) == 99
    return {"version": "synthetic-1", "pairs": pairs}


def build_synonyms(defaults):
    table = {k: list(v) for k, v in defaults.items() if k != "version"}
    for canonical, alias in SYNONYM_PAIRS:
        key = canonical.lower()
        aliases = table.setdefault(key, [])
        if alias.lower() not in aliases and alias.lower() != key:
            aliases.append(alias.lower())
    return {"version": "sample-1", **{k: sorted(v) for k, v in sorted(table.items())}}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--dump", default="build/tools/dxenv_dump_defaults")
    args = ap.parse_args()
    DATA.mkdir(exist_ok=True)

    def dump(what):
        return json.loads(subprocess.check_output([args.dump, what], text=True))

    (DATA / "personas.json").write_text(json.dumps(dump("personas"), indent=2) + "\n")
    (DATA / "noise_lexicon.json").write_text(json.dumps(dump("lexicon"), indent=2) + "\n")
    (DATA / "synonyms.json").write_text(json.dumps(build_synonyms(dump("synonyms")), indent=2) + "\n")

    with open(DATA / "sample_cases.jsonl", "w") as f:
        for case in build_cases():
            f.write(json.dumps(case) + "\n")

    taxonomy = {"version": "sample-1", "entries": [
        {"schema": tool_schema(n), "category": TAXONOMY[n][4]} for n in sorted(TAXONOMY)]}
    (DATA / "taxonomy.json").write_text(json.dumps(taxonomy, indent=2) + "\n")
    (DATA / "probe_pairs.json").write_text(json.dumps(build_probes(), indent=2) + "\n")


if __name__ == "__main__":
    main()
