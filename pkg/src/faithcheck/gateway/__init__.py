from .base import (
    ContextOverflow,
    ContinuationScore,
    Embedder,
    EmptyContinuation,
    EmptyInput,
    GatewayError,
    GenerationParams,
    LanguageModel,
    embed,
    embed_many,
    generate,
    score_continuation,
)
from .remote import (
    ChatClient,
    ExhaustedRetries,
    FatalStatus,
    MissingCredentials,
    RemoteClientConfig,
    RequestTimeout,
    chat_complete,
)
from .registry import load_embedder, load_model
from .tiny import TinyLM, TinyLMConfig
