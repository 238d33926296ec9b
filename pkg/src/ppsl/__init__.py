"""Find the community around a query node using a few labeled communities.

Three trainable stages: a contrastively pre-trained graph-convolution
encoder, a policy-gradient agent that grows an initial community, and a
per-query pair scorer fine-tuned on retrieved similar communities.
"""

__version__ = "0.1.0"

from .config import PipelineConfig, config_fingerprint, load_config, serialize_config
from .encoder import (
    EmbeddingTable,
    Encoder,
    EncoderConfig,
    embed_community,
    encode_all,
    encode_subgraph,
    loss_ns,
    loss_ss,
    pretrain_encoder,
)
from .evaluation import QuerySpec, RunReport, aggregate, run_queries
from .graph import (
    Community,
    CommunitySet,
    FeatureTable,
    Graph,
    Subgraph,
    corrupt,
    generate_planted_partition,
    k_ego,
    load_communities,
    load_edge_list,
    sample_query_nodes,
    structural_features,
)
from .metrics import PairScores, score_pair
from .pipeline import PipelineHandle, build_handle, run_pretrain, run_train_agent
from .prompt import (
    PromptConfig,
    PromptModel,
    build_prompt_samples,
    predict_community,
    prompt_loss,
    train_prompt,
)
from .sampler import (
    Agent,
    ExpansionState,
    SamplerConfig,
    Trajectory,
    generate_initial_community,
    init_node_features,
    policy_distribution,
    policy_update,
    retrieve_similar,
    returns,
    sample_trajectory,
    step_reward,
    teacher_forcing_update,
    train_agent,
)
