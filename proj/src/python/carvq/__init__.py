"""Group residual vector quantization with a corrective adaptor for embedding matrices."""

from ._carvq import (
    Adaptor,
    AdaptorConfig,
    CarvqError,
    CompressedArtifact,
    CompressOptions,
    DType,
    EmbeddingMatrix,
    Granularity,
    GrvqModel,
    GrvqParams,
    Precision,
    SchemeKind,
    SchemeSpec,
    SqModel,
    SqParams,
    adaptor_parameter_count,
    bpp_ca,
    bpp_rvq,
    bpp_total,
    compare_schemes,
    compress,
    embed_lookup,
    embedding_ratio,
    evaluate,
    gen_synthetic,
    grvq_compress,
    grvq_reconstruct,
    init_adaptor,
    load_matrix,
    memory_report,
    save_matrix,
    sq_dequantize,
    sq_quantize,
    train_adaptor,
)

__all__ = [name for name in dir() if not name.startswith("_")]
