# -*- coding: utf-8 -*-
# Copyright (c) 2025, Al-Aswany and contributors
# For license information, please see license.txt

app_name = "wagegap"
app_title = "Wage Gap Decomposition"
app_publisher = "Al-Aswany"
app_description = "Two-sided latent heterogeneity wage-gap decomposition for linked employer-employee panels"
app_email = "developer@example.com"
app_license = "MIT"

# Pipeline
# --------

# stage order used by run_pipeline; the index also keys derived stage seeds
pipeline_stages = [
    "simulate",
    "cluster",
    "gapstat",
    "estimate",
    "assign",
    "decompose",
    "counterfactual",
    "graph",
]

# Artifact versions
# -----------------

artifact_versions = {
    "ground_truth": 1,
    "classing": 1,
    "mixture_model": 1,
    "gap_statistic": 1,
    "bias": 1,
    "components": 1,
    "ingestion_report": 1,
    "manifest": 1,
}

# Exit codes
# ----------

exit_codes = {
    "success": 0,
    "config": 2,
    "data": 3,
    "numerical": 4,
}

# Defaults
# --------

default_biennial_pairs = [(2010, 2012), (2011, 2013), (2012, 2014), (2013, 2015), (2014, 2016), (2015, 2017)]

# Logging
# -------

log_format = "%(asctime)s %(levelname)s %(name)s: %(message)s"
