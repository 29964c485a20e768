from .study import (
    HEADER, PatientStudy, decode_study, encode_study, load_study, normalize, save_study,
    stack_studies, study_file_size, study_to_array,
)
from .manifest import CohortManifest, ManifestEntry, load_cohort, load_manifest, write_manifest
from .synthetic import (
    SyntheticParams, generate_study, generate_synthetic_cohort, make_synthetic_studies,
    region_mean_scores, territory_mask,
)
from .folds import permute_labels, stratified_kfold, stratified_train_val_split
