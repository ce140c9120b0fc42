import math
from typing import Any, Dict, Mapping, Optional

from rest_framework import serializers

from .evaluation import TiePolicy
from .exceptions import ConfigError
from .models import TrainingRun
from .scoring import ModelKind
from .trainer import FakePool, TrainingConfig, TrainingMode


def format_errors(errors: Any, prefix: str = '') -> str:
    """Flatten DRF error details into 'key: message' fragments"""
    if isinstance(errors, Mapping):
        parts = [format_errors(value, f"{prefix}{key}: ") for key, value in errors.items()]
        return '; '.join(parts)
    if isinstance(errors, (list, tuple)):
        return '; '.join(format_errors(item, prefix) for item in errors)
    return f"{prefix}{errors}"


class TrainingConfigSerializer(serializers.Serializer):
    """Strict flat JSON training configuration"""

    gamma = serializers.FloatField(default=8.0)
    epsilon = serializers.FloatField(default=2.0)
    alpha = serializers.FloatField(default=1.0, min_value=0.0)
    beta = serializers.FloatField(default=0.1, min_value=0.0)
    lr_e = serializers.FloatField(default=1e-3)
    lr_a = serializers.FloatField(default=2e-4)
    k = serializers.IntegerField(default=128, min_value=1)
    n_l = serializers.IntegerField(default=128, min_value=1)
    n_a = serializers.IntegerField(default=128, min_value=1)
    t_g = serializers.IntegerField(default=5, min_value=0)
    t_d = serializers.IntegerField(default=5, min_value=0)
    t_l = serializers.IntegerField(default=None, allow_null=True, min_value=1)
    warmup_fraction = serializers.FloatField(default=0.01, min_value=0.0)
    anneal_cycles = serializers.IntegerField(default=4, min_value=1)
    lambda_g = serializers.FloatField(default=1.0, min_value=0.0)
    seed = serializers.IntegerField(default=0)
    mode = serializers.ChoiceField(choices=[m.value for m in TrainingMode], default=TrainingMode.ATRANSN.value)
    kind = serializers.ChoiceField(choices=[k.value for k in ModelKind], default=ModelKind.TRANSE.value)
    dim = serializers.IntegerField(default=200, min_value=1)
    epochs_max = serializers.IntegerField(default=300, min_value=1)
    eval_every = serializers.IntegerField(default=None, allow_null=True, min_value=1)
    norm_p = serializers.ChoiceField(choices=[1, 2], default=None, allow_null=True)
    leaky_slope = serializers.FloatField(default=0.01)
    transition_activation = serializers.BooleanField(default=True)
    unit_weights = serializers.BooleanField(default=False)
    transfer_cap = serializers.IntegerField(default=None, allow_null=True, min_value=1)
    full_alignment = serializers.BooleanField(default=False)
    fake_pool = serializers.ChoiceField(choices=[p.value for p in FakePool], default=FakePool.ALIGNED.value)
    tie_policy = serializers.ChoiceField(choices=[p.value for p in TiePolicy], default=TiePolicy.OPTIMISTIC.value)
    split_ratios = serializers.ListField(
        child=serializers.FloatField(min_value=0.0),
        min_length=3,
        max_length=3,
        default=lambda: [0.6, 0.2, 0.2],
    )
    teacher_dim = serializers.IntegerField(default=None, allow_null=True, min_value=1)

    def to_internal_value(self, data):
        if not isinstance(data, Mapping):
            raise serializers.ValidationError({'config': ["Expected a JSON object."]})
        unknown = sorted(set(data) - set(self.fields))
        if unknown:
            raise serializers.ValidationError({key: ["Unknown configuration key."] for key in unknown})
        return super().to_internal_value(data)

    def validate_lr_e(self, value):
        if value <= 0:
            raise serializers.ValidationError("Learning rate must be positive.")
        return value

    def validate_lr_a(self, value):
        if value <= 0:
            raise serializers.ValidationError("Learning rate must be positive.")
        return value

    def validate_warmup_fraction(self, value):
        if value >= 1:
            raise serializers.ValidationError("Warmup fraction must be below 1.")
        return value

    def validate(self, attrs):
        if abs(math.fsum(attrs['split_ratios']) - 1.0) > 1e-9:
            raise serializers.ValidationError({'split_ratios': ["Ratios must sum to 1."]})
        if ModelKind(attrs['kind']).is_complex and attrs['dim'] % 2:
            raise serializers.ValidationError({'dim': [f"{attrs['kind']} needs an even dimension."]})
        return attrs

    def to_config(self) -> TrainingConfig:
        data = dict(self.validated_data)
        data['split_ratios'] = tuple(data['split_ratios'])
        return TrainingConfig(**data)


def parse_training_config(payload: Any, overrides: Optional[Dict[str, Any]] = None) -> TrainingConfig:
    """Validate a config payload and apply non-None overrides"""
    serializer = TrainingConfigSerializer(data=payload)
    if not serializer.is_valid():
        raise ConfigError(f"invalid training config: {format_errors(serializer.errors)}")
    config = serializer.to_config()
    changes = {key: value for key, value in (overrides or {}).items() if value is not None}
    return config.replace(**changes) if changes else config


class RankingMetricsSerializer(serializers.Serializer):
    """Metrics report written by eval and training runs"""

    mr = serializers.FloatField(min_value=1.0)
    mrr = serializers.FloatField(min_value=0.0, max_value=1.0)
    hits1 = serializers.FloatField(min_value=0.0, max_value=1.0)
    hits3 = serializers.FloatField(min_value=0.0, max_value=1.0)
    hits10 = serializers.FloatField(min_value=0.0, max_value=1.0)
    n_queries = serializers.IntegerField(min_value=0)
    label = serializers.CharField(required=False, allow_blank=True, allow_null=True)
    mode = serializers.CharField(required=False, allow_blank=True, allow_null=True)
    ratio = serializers.FloatField(required=False, allow_null=True)
    split = serializers.CharField(required=False, allow_blank=True, allow_null=True)


class RunManifestSerializer(serializers.ModelSerializer):
    """Deterministic manifest of a run; timestamps and ids are left out"""

    class Meta:
        model = TrainingRun
        fields = [
            'command',
            'status',
            'seed',
            'mode',
            'label',
            'config',
            'arguments',
            'input_digests',
            'artifacts',
            'best_metrics',
            'selection_score',
            'tool_version',
        ]
