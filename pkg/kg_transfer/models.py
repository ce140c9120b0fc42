from django.db import models


class TrainingRun(models.Model):
    """Record of one command invocation and the artifacts it produced"""

    command = models.CharField(max_length=32, help_text="Management command that produced the run")
    status = models.CharField(
        max_length=20,
        choices=[
            ('pending', 'Pending'),
            ('running', 'Running'),
            ('completed', 'Completed'),
            ('failed', 'Failed'),
        ],
        default='pending'
    )

    # Inputs
    seed = models.IntegerField(null=True, blank=True)
    mode = models.CharField(max_length=16, blank=True, default='')
    label = models.CharField(max_length=255, blank=True, default='')
    config = models.JSONField(default=dict, blank=True)
    arguments = models.JSONField(default=dict, blank=True)
    input_digests = models.JSONField(default=dict, blank=True, help_text="sha256 per input path")

    # Outputs
    out_dir = models.CharField(max_length=1024, blank=True, default='')
    artifacts = models.JSONField(default=dict, blank=True)
    best_metrics = models.JSONField(null=True, blank=True)
    selection_score = models.FloatField(null=True, blank=True)
    tool_version = models.CharField(max_length=32, blank=True, default='')

    error_message = models.TextField(blank=True, null=True)

    created_at = models.DateTimeField(auto_now_add=True)
    updated_at = models.DateTimeField(auto_now=True)

    class Meta:
        ordering = ['-created_at']
        verbose_name = "Training Run"
        verbose_name_plural = "Training Runs"

    def __str__(self):
        return f"Run {self.id} ({self.command}) - {self.status}"
