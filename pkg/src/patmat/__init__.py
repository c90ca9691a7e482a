"""Pattern matching and destructive rewriting over operator trees.

The package splits into small layers: `terms` (signatures, ground terms,
substitutions), `patterns` (the pattern AST with guards, existentials,
match constraints, function variables, and recursion), `declarative` (a
witness checker and bounded enumerator used as a testing oracle), `vm`
(the backtracking match machine), `rewriting` (rules and the fixpoint
pass), `frontend`/`wire` (the textual language and the portable format),
and `cli`.
"""

from .terms import (
    ArityMismatch,
    AttributeInterpreter,
    DEFAULT_INTERPRETER,
    EngineError,
    OperatorSignature,
    SignatureConflict,
    Term,
    UnknownOperator,
    attr_eval,
    declare_op,
    extend_consistent,
    mk_term,
    subterms,
    term_depth,
    term_eq,
    term_size,
)
from .patterns import (
    Add,
    Alt,
    And,
    App,
    Eq,
    Exists,
    Expr,
    FunApp,
    Guard,
    Guarded,
    Lit,
    Lt,
    MatchConstr,
    Mul,
    Not,
    Or,
    Pattern,
    Rec,
    RecCall,
    Sub,
    TermAttr,
    Var,
    VarAttr,
    eval_expr,
    eval_guard,
    free_pattern_vars,
    unfold_rec,
    well_formed,
)
from .declarative import Verdict, check_match, enumerate_witnesses
from .vm import (
    BacktrackFrame,
    BackMatch,
    BudgetExhausted,
    CheckBound,
    CheckGuard,
    DoMatch,
    Failure,
    Matched,
    NoMatch,
    Running,
    StuckState,
    Success,
    backtrack,
    initial_state,
    run_match,
    step,
)
from .rewriting import (
    BudgetExhaustedError,
    PatternDef,
    RewriteStats,
    Rule,
    RuleClause,
    RuleSet,
    TApp,
    TFunApp,
    TVar,
    Template,
    instantiate_template,
    rewrite_fixpoint,
    try_rewrite_at,
)
from .frontend import (
    CompileError,
    ParseError,
    SurfaceProgram,
    compile_program,
    compile_text,
    parse_program,
    parse_term,
    print_term,
)
from .wire import SchemaError, VersionMismatch, deserialize_ruleset, serialize_ruleset

__version__ = "0.1.0"
