"""Grid-keyed Merkle escrow for treaty site declarations.

A declaring party commits to a complete declaration with one published
digest, then reveals individual sites at two nesting levels and proves
absence at challenged coordinates, step by step, under a two-party
verification protocol.
"""

from .commitments import (
    Level0Preimage,
    Level1Payload,
    Level1Preimage,
    OpeningResult,
    Presence,
    SiteRecord,
    commit_leaf,
    commit_level1,
    decode_level0,
    decode_level1,
    derive_salts,
    encode_level0,
    encode_level1,
    verify_opening,
)
from .escrow import (
    Declaration,
    EscrowPackage,
    IntegrityError,
    IsASite,
    NotASite,
    PublicCommitment,
    Revelation,
    RevelationKind,
    RevelationResult,
    build_escrow,
    load_commitment,
    load_declaration,
    load_package,
    prove_absence,
    rekey,
    reveal,
    save_commitment,
    save_declaration,
    save_package,
    verify_revelation,
)
from .grid import (
    BoundsError,
    DPRK_GRID,
    GridKey,
    GridSpec,
    InvalidKey,
    coord_to_key,
    key_to_coord,
    key_to_path,
    parse_key,
)
from .hash_suite import (
    Digest,
    HashSuite,
    SHA2_256,
    SHA3_256,
    SuiteError,
    SuiteMode,
    digest,
    make_suite,
    parse_suite,
    register_algorithm,
)
from .merkle import MerkleProof, MerkleTree, build_tree, oracle_root, prove, verify_proof
from .protocol import (
    CellState,
    InspectionVerdict,
    Obligation,
    Phase,
    ProtocolViolation,
    Role,
    SessionState,
    WireMessage,
    advance,
    completeness_report,
    initial_state,
    record_inspection,
    replay_log,
    select_targets,
)

__version__ = "0.1.0"
