from .config import CohortConfig
from .template import Template, make_template, cohort_grid, ring_profile
from .cohort import (
    Cohort,
    Subject,
    SubjectMaps,
    generate_cohort,
    image_id,
    load_cohort,
    parse_image_id,
    progression_values,
    random_velocity,
    read_labels,
    sample_subject,
    subject_maps,
    thinning_velocity,
    write_cohort,
)
from .registration import (
    FileRegistration,
    OracleRegistration,
    RegistrationCache,
    RegistrationProvider,
    field_filename,
    load_external_field,
    oracle_registration,
)

__all__ = [
    "CohortConfig",
    "Template",
    "make_template",
    "cohort_grid",
    "ring_profile",
    "Cohort",
    "Subject",
    "SubjectMaps",
    "generate_cohort",
    "image_id",
    "load_cohort",
    "parse_image_id",
    "progression_values",
    "random_velocity",
    "read_labels",
    "sample_subject",
    "subject_maps",
    "thinning_velocity",
    "write_cohort",
    "FileRegistration",
    "OracleRegistration",
    "RegistrationCache",
    "RegistrationProvider",
    "field_filename",
    "load_external_field",
    "oracle_registration",
]
